#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "ymwml/data.hpp"

namespace ymwml {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(Errc::format, "bad PGM header field '" + tok + "' in " + path.string());
  }
  return std::stoul(tok);
}

}  // namespace

ByteGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open " + path.string());
  const std::string buf(std::istreambuf_iterator<char>(f), {});
  std::size_t pos = 0;
  const std::string magic = header_token(buf, pos);
  if (magic != "P5") {
    throw Error(Errc::format, "unsupported image format '" + magic + "' in " + path.string() +
                                  " (need binary P5)");
  }
  ByteGrid grid;
  grid.width = parse_dim(header_token(buf, pos), path);
  grid.height = parse_dim(header_token(buf, pos), path);
  const std::size_t maxval = parse_dim(header_token(buf, pos), path);
  if (maxval != 255) {
    throw Error(Errc::format, "unsupported PGM maxval " + std::to_string(maxval) + " in " +
                                  path.string());
  }
  if (grid.width == 0 || grid.height == 0) throw Error(Errc::format, "empty PGM " + path.string());
  ++pos;  // single whitespace byte after maxval
  const std::size_t payload = grid.width * grid.height;
  if (pos > buf.size() || buf.size() - pos < payload) {
    throw Error(Errc::truncated, "PGM payload truncated in " + path.string());
  }
  grid.bytes.assign(buf.begin() + long(pos), buf.begin() + long(pos + payload));
  return grid;
}

void write_pgm(const ByteGrid& grid, const std::filesystem::path& path) {
  if (grid.bytes.size() != grid.width * grid.height) {
    throw Error(Errc::invalid_shape, "pixel count does not match PGM dimensions");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(grid.bytes.data()), std::streamsize(grid.bytes.size()));
  if (!f) throw Error(Errc::io, "failed writing " + path.string());
}

}  // namespace ymwml
