#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ymwml/nn.hpp"
#include "ymwml/parameters.hpp"
#include "ymwml/rng.hpp"
#include "ymwml/tensor.hpp"

namespace ymwml {

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 4;
  std::size_t input_size = 256;
  double width = 1.0;
  std::size_t gn_groups = 8;
  /// Feed the full-resolution stem features into the final classifier
  /// convolution alongside the upsampled head features.
  bool stem_skip = true;

  /// round(base * width) rounded up to a multiple of gn_groups, at least
  /// gn_groups.
  std::size_t channels(std::size_t base) const;
  /// Throws Errc::config when the configuration cannot be built.
  void validate() const;
};

struct StageShape {
  std::string stage;
  std::size_t spatial;
  std::size_t channels;
};

/// Every stage's output shape, computed arithmetically from the config.
std::vector<StageShape> shape_report(const ModelConfig& cfg);

/// Intermediate tensors exposed for inspection.
struct ForwardTrace {
  std::array<Tensor, 3> head_inputs;  // strides 8, 16, 32
  std::vector<std::pair<std::string, Shape>> stages;
};

struct ForwardOptions {
  /// Replace both head self-attention modules with the identity map.
  bool bypass_head_attention = false;
};

class Model {
 public:
  Model(const ModelConfig& cfg, Rng& rng);

  /// x [N, in_channels, S, S] -> logits [N, K, S, S]
  Tensor forward(const Tensor& x, ForwardTrace* trace = nullptr,
                 const ForwardOptions& options = {}) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  /// Copies values from `source`; names and shapes must match exactly.
  void load_parameters(const ParameterStore& source);

 private:
  struct Block {
    nn::ConvUnitParams keep;
    nn::ConvUnitParams down;
  };

  ModelConfig cfg_;
  ParameterStore params_;

  nn::ConvUnitParams stem_;
  std::array<Block, 5> blocks_;
  nn::SppfParams sppf_;
  nn::C2psaParams c2psa_;
  nn::C3k2Params top_down16_, top_down8_, bottom_up16_, bottom_up32_;
  nn::ConvUnitParams down8_, down16_;
  nn::ChannelAttentionParams ca8_, ca16_, ca32_;
  nn::ConvParams project32_, project16_;
  nn::SelfAttentionParams sa16_, sa8_;
  nn::ConvUnitParams refine_;
  nn::ConvParams classifier_;
};

/// Binary little-endian checkpoint: "YMWML001", u32 count, then per tensor
/// u32 name length, name, u32 ndim, u64 dims, f64 data.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace ymwml
