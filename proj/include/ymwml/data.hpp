#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ymwml/rng.hpp"
#include "ymwml/tensor.hpp"
#include "ymwml/wme_loss.hpp"

namespace ymwml {

struct ByteGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bytes;  // row-major
};

/// Binary P5 PGM with maxval 255 only.
ByteGrid read_pgm(const std::filesystem::path& path);
void write_pgm(const ByteGrid& grid, const std::filesystem::path& path);

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, values in [0, 1]
};

struct Sample {
  std::string id;
  Image image;
  LabelMask mask;  // batch == 1
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& named(std::string_view split) const;
};

struct Dataset {
  std::vector<Sample> samples;  // sorted by id
  DatasetSplit split;

  const Sample& find(std::string_view id) const;
  std::vector<const Sample*> subset(std::string_view split_name) const;
};

/// Reads images/<id>.pgm, masks/<id>.pgm and split.txt under `root`.
Dataset load_dataset(const std::filesystem::path& root, std::size_t num_classes);
void write_dataset(const std::filesystem::path& root, std::span<const Sample> samples,
                   const DatasetSplit& split);

/// Synthetic short-axis cardiac slice: LV disk (3) inside a myocardium ring
/// (2), an RV crescent (1) hugging the ring, background (0) elsewhere.
Sample generate_phantom(Rng& rng, std::size_t size, std::size_t num_classes = 4,
                        std::string id = "phantom");

/// Largest-remainder split of n items by fractions (train, val, test).
std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> fractions);

Sample resize_nearest(const Sample& sample, std::size_t target);

struct Batch {
  Tensor images;  // [N, 1, S, S]
  LabelMask masks;
  std::vector<std::string> ids;
};

/// Fisher-Yates permutation of [0, n) for the given (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Walks one epoch of shuffled batches; the final batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::vector<const Sample*> samples, std::size_t batch_size, std::uint64_t seed,
                std::size_t epoch);

  std::optional<Batch> next();
  std::size_t batches() const;

 private:
  std::vector<const Sample*> samples_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

/// Stacks samples (all the same size) into a batch in the given order.
Batch make_batch(std::span<const Sample* const> samples);

}  // namespace ymwml
