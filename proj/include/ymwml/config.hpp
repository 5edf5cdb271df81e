#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ymwml/model.hpp"

namespace ymwml {

/// Training run configuration. Precedence: built-in default < config file <
/// command-line flag (apply file first, then flags, through set()).
struct TrainConfig {
  std::string dataset_root;
  std::optional<std::size_t> epochs;  // required, no default
  std::size_t batch_size = 8;
  std::size_t input_size = 256;
  double width = 1.0;
  std::size_t num_classes = 4;
  double lr0 = 0.01;
  double power = 0.9;
  double weight_decay = 1e-4;
  double beta1 = 2.0;
  double beta2 = 1.0;
  std::string cr_scope = "dataset";   // dataset | batch
  std::string reduction = "sum";      // sum | mean
  std::string lambda = "class-rate";  // class-rate | uniform (ablation: lambda = 1)
  std::string loss = "wme";           // wme | cross-entropy
  bool stem_skip = true;
  std::uint64_t seed = 42;
  std::string output_dir = "run";

  /// Keys are the field names above. Throws Errc::config on an unknown key
  /// or unparsable value.
  void set(std::string_view key, std::string_view value);
  /// "key = value" lines; '#' starts a comment; blank lines ignored.
  void load_file(const std::filesystem::path& path);
  void validate() const;

  /// Every field as "key = value", in declaration order.
  std::string resolved() const;
  ModelConfig model() const;

  static const std::vector<std::string>& keys();
};

}  // namespace ymwml
