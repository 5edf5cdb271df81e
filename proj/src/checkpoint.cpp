#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ymwml/model.hpp"

namespace ymwml {

namespace {

constexpr char kMagic[8] = {'Y', 'M', 'W', 'M', 'L', '0', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, b, sizeof(T));
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(Errc::truncated, "checkpoint is truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    if (!t.is_finite()) throw Error(Errc::non_finite, "refusing to save non-finite tensor " + name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.data()) put_le<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw Error(Errc::io, "failed writing " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  std::string magic;
  try {
    magic = r.take(sizeof(kMagic));
  } catch (const Error&) {
    throw Error(Errc::format, "not a checkpoint (file shorter than the magic)");
  }
  if (magic != std::string(kMagic, sizeof(kMagic))) {
    throw Error(Errc::format, "bad checkpoint magic in " + path.string());
  }
  ParameterStore store;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.take(name_len);
    const auto ndim = r.get<std::uint32_t>();
    if (ndim == 0 || ndim > 8) throw Error(Errc::format, "tensor " + name + " has invalid rank");
    Shape shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (d == 0) throw Error(Errc::format, "tensor " + name + " has a zero dimension");
      n *= d;
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    store.add(std::move(name), Tensor::from(shape, std::move(values)));
  }
  if (!r.done()) throw Error(Errc::format, "trailing bytes after checkpoint payload");
  return store;
}

}  // namespace ymwml
