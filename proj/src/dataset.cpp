#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "ymwml/data.hpp"

namespace ymwml {

namespace fs = std::filesystem;

const std::vector<std::string>& DatasetSplit::named(std::string_view split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw Error(Errc::invalid_argument, "unknown split '" + std::string(split) + "'");
}

const Sample& Dataset::find(std::string_view id) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), id,
                             [](const Sample& s, std::string_view v) { return s.id < v; });
  if (it == samples.end() || it->id != id) {
    throw Error(Errc::malformed_split, "unknown sample id '" + std::string(id) + "'");
  }
  return *it;
}

std::vector<const Sample*> Dataset::subset(std::string_view split_name) const {
  std::vector<const Sample*> out;
  for (const auto& id : split.named(split_name)) out.push_back(&find(id));
  return out;
}

namespace {

std::map<std::string, fs::path> list_pgm(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) throw Error(Errc::io, "missing directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      out.emplace(entry.path().stem().string(), entry.path());
    }
  }
  return out;
}

DatasetSplit read_split(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open " + path.string());
  DatasetSplit split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream is(line);
    std::string name, id, extra;
    if (!(is >> name >> id) || (is >> extra)) {
      throw Error(Errc::malformed_split, path.string() + ":" + std::to_string(line_no) +
                                             ": expected '<split> <id>'");
    }
    if (name == "train") {
      split.train.push_back(id);
    } else if (name == "val") {
      split.val.push_back(id);
    } else if (name == "test") {
      split.test.push_back(id);
    } else {
      throw Error(Errc::malformed_split, path.string() + ":" + std::to_string(line_no) +
                                             ": unknown split '" + name + "'");
    }
  }
  return split;
}

}  // namespace

Dataset load_dataset(const fs::path& root, std::size_t num_classes) {
  const auto images = list_pgm(root / "images");
  const auto masks = list_pgm(root / "masks");
  for (const auto& [id, path] : masks) {
    if (!images.contains(id)) {
      throw Error(Errc::orphan_mask, "mask " + path.string() + " has no matching image");
    }
  }
  Dataset ds;
  for (const auto& [id, path] : images) {
    auto mit = masks.find(id);
    if (mit == masks.end()) {
      throw Error(Errc::orphan_mask, "image " + path.string() + " has no matching mask");
    }
    const ByteGrid img = read_pgm(path);
    const ByteGrid msk = read_pgm(mit->second);
    if (img.width != msk.width || img.height != msk.height) {
      throw Error(Errc::shape_mismatch, "image and mask sizes differ for " + id);
    }
    Sample s;
    s.id = id;
    s.image.height = img.height;
    s.image.width = img.width;
    s.image.pixels.reserve(img.bytes.size());
    for (auto b : img.bytes) s.image.pixels.push_back(double(b) / 255.0);
    s.mask = LabelMask::single(msk.height, msk.width, msk.bytes);
    try {
      s.mask.check_range(num_classes);
    } catch (const Error& e) {
      throw Error(Errc::range, "mask " + mit->second.string() + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }

  ds.split = read_split(root / "split.txt");
  std::set<std::string> seen;
  for (const auto* list : {&ds.split.train, &ds.split.val, &ds.split.test}) {
    for (const auto& id : *list) {
      if (!images.contains(id)) {
        throw Error(Errc::malformed_split, "split.txt names unknown sample '" + id + "'");
      }
      if (!seen.insert(id).second) {
        throw Error(Errc::malformed_split, "sample '" + id + "' appears in more than one split");
      }
    }
  }
  if (seen.size() != ds.samples.size()) {
    throw Error(Errc::malformed_split, "split.txt does not cover every sample");
  }
  return ds;
}

void write_dataset(const fs::path& root, std::span<const Sample> samples,
                   const DatasetSplit& split) {
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) throw Error(Errc::io, "cannot create " + root.string() + ": " + ec.message());
  for (const auto& s : samples) {
    ByteGrid img{s.image.width, s.image.height, {}};
    img.bytes.reserve(s.image.pixels.size());
    for (double v : s.image.pixels) {
      img.bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    write_pgm(img, root / "images" / (s.id + ".pgm"));
    write_pgm(ByteGrid{s.mask.width, s.mask.height, s.mask.labels}, root / "masks" / (s.id + ".pgm"));
  }
  std::ofstream f(root / "split.txt", std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot write split.txt under " + root.string());
  for (const auto& id : split.train) f << "train " << id << '\n';
  for (const auto& id : split.val) f << "val " << id << '\n';
  for (const auto& id : split.test) f << "test " << id << '\n';
}

namespace {

// Per-class base intensities: background, RV, myocardium, LV.
constexpr double kIntensity[4] = {0.10, 0.55, 0.30, 0.85};
constexpr double kNoiseSigma = 0.05;

}  // namespace

Sample generate_phantom(Rng& rng, std::size_t size, std::size_t num_classes, std::string id) {
  if (size < 64) throw Error(Errc::invalid_argument, "phantom size must be at least 64");
  if (num_classes != 4) throw Error(Errc::invalid_argument, "phantoms have exactly 4 classes");
  const double s = double(size);
  // Draw order is part of the format: centre, radii, RV placement.
  const double cx = s / 2 + rng.uniform(-s / 10, s / 10);
  const double cy = s / 2 + rng.uniform(-s / 10, s / 10);
  const double r_lv = rng.uniform(0.08, 0.11) * s;
  const double r_myo = r_lv + rng.uniform(0.045, 0.065) * s;
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r_rv = rng.uniform(0.11, 0.15) * s;
  const double rv_cx = cx + 0.9 * r_myo * std::cos(angle);
  const double rv_cy = cy + 0.9 * r_myo * std::sin(angle);
  const double gap = 0.015 * s;

  Sample out;
  out.id = std::move(id);
  out.mask = LabelMask::single(size, size, std::vector<std::uint8_t>(size * size, 0));
  out.image.height = out.image.width = size;
  out.image.pixels.resize(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      const double r = std::hypot(px - cx, py - cy);
      const double r_b = std::hypot(px - rv_cx, py - rv_cy);
      std::uint8_t label = 0;
      if (r < r_lv) {
        label = 3;
      } else if (r < r_myo) {
        label = 2;
      } else if (r_b < r_rv && r >= r_myo + gap) {
        label = 1;
      }
      out.mask.labels[y * size + x] = label;
    }
  }
  Tensor noise = Tensor::randn({size * size}, rng);
  for (std::size_t i = 0; i < size * size; ++i) {
    const double v = kIntensity[out.mask.labels[i]] + kNoiseSigma * noise[i];
    out.image.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(Errc::invalid_argument, "split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(Errc::invalid_argument, "split fractions must sum to 1");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * double(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - double(counts[i]);
    assigned += counts[i];
  }
  // Leftovers go to the largest remainders; ties favour the larger fraction,
  // then the earlier split.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return fractions[a] > fractions[b];
  });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++counts[order[k]];
  return counts;
}

Sample resize_nearest(const Sample& sample, std::size_t target) {
  if (target == 0 || target % 32 != 0) {
    throw Error(Errc::invalid_argument, "resize target must be a positive multiple of 32");
  }
  const std::size_t h = sample.image.height, w = sample.image.width;
  Sample out;
  out.id = sample.id;
  out.image.height = out.image.width = target;
  out.image.pixels.resize(target * target);
  out.mask = LabelMask::single(target, target, std::vector<std::uint8_t>(target * target));
  for (std::size_t y = 0; y < target; ++y) {
    const std::size_t sy = y * h / target;
    for (std::size_t x = 0; x < target; ++x) {
      const std::size_t sx = x * w / target;
      out.image.pixels[y * target + x] = sample.image.pixels[sy * w + sx];
      out.mask.labels[y * target + x] = sample.mask.labels[sy * w + sx];
    }
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, epoch);
  for (std::size_t i = n; i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.uniform() * double(i + 1));
    std::swap(order[i], order[std::min(j, i)]);
  }
  return order;
}

Batch make_batch(std::span<const Sample* const> samples) {
  if (samples.empty()) throw Error(Errc::empty_input, "cannot batch zero samples");
  const std::size_t h = samples.front()->image.height, w = samples.front()->image.width;
  Batch b;
  b.images = Tensor::zeros({samples.size(), 1, h, w});
  b.masks.batch = samples.size();
  b.masks.height = h;
  b.masks.width = w;
  b.masks.labels.reserve(samples.size() * h * w);
  auto dst = b.images.data();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    if (s.image.height != h || s.image.width != w) {
      throw Error(Errc::shape_mismatch, "batch mixes image sizes (" + s.id + ")");
    }
    std::copy(s.image.pixels.begin(), s.image.pixels.end(), dst.begin() + long(i * h * w));
    b.masks.labels.insert(b.masks.labels.end(), s.mask.labels.begin(), s.mask.labels.end());
    b.ids.push_back(s.id);
  }
  return b;
}

BatchIterator::BatchIterator(std::vector<const Sample*> samples, std::size_t batch_size,
                             std::uint64_t seed, std::size_t epoch)
    : samples_(std::move(samples)), batch_size_(batch_size) {
  if (samples_.empty()) throw Error(Errc::empty_input, "no samples to iterate");
  if (batch_size_ == 0) throw Error(Errc::invalid_argument, "batch size must be at least 1");
  order_ = epoch_order(samples_.size(), seed, epoch);
}

std::size_t BatchIterator::batches() const {
  return (samples_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  std::vector<const Sample*> picked;
  for (std::size_t i = cursor_; i < end; ++i) picked.push_back(samples_[order_[i]]);
  cursor_ = end;
  return make_batch(picked);
}

}  // namespace ymwml
