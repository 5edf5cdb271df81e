#pragma once

#include <cstddef>
#include <string_view>

#include "ymwml/ops.hpp"
#include "ymwml/parameters.hpp"
#include "ymwml/tensor.hpp"

namespace ymwml::nn {

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

/// Square kernel (1 or 3), zero padding k / 2.
struct ConvParams {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;

  std::size_t kernel() const { return weight.size(2); }
  std::size_t padding() const { return kernel() / 2; }
  std::size_t in_channels() const { return weight.size(1); }
  std::size_t out_channels() const { return weight.size(0); }
};

struct GroupNormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  std::size_t groups = 1;
  double eps = 1e-5;
};

/// Squeeze-and-excitation gate.
struct ChannelAttentionParams {
  ConvParams reduce;  // C -> C / r
  ConvParams expand;  // C / r -> C
};

/// Single-head non-local block with a learnable residual gain.
struct SelfAttentionParams {
  ConvParams query;  // C -> max(C / 8, 1)
  ConvParams key;    // C -> max(C / 8, 1)
  ConvParams value;  // C -> C
  Tensor gain;       // [1], initialized to 0
};

/// conv -> GroupNorm -> ReLU
struct ConvUnitParams {
  ConvParams conv;
  GroupNormParams norm;
};

struct BottleneckParams {
  ConvParams conv1;
  GroupNormParams norm1;
  ConvParams conv2;
  GroupNormParams norm2;
};

struct SppfParams {
  ConvParams reduce;  // C -> C / 2
  ConvParams fuse;    // 2C -> C
};

struct C3k2Params {
  ConvParams expand;            // C_in -> C_out
  BottleneckParams bottleneck[2];  // on C_out / 2 channels
  ConvParams fuse;              // 3 * C_out / 2 -> C_out
};

struct C2psaParams {
  ConvParams expand;  // C -> C
  SelfAttentionParams attention;  // on C / 2 channels
  ConvParams fuse;    // C -> C
};

constexpr std::size_t kChannelAttentionRatio = 4;
constexpr std::size_t kMaxAttentionTokens = 4096;

/// Largest group count <= 8 dividing `channels`.
std::size_t default_groups(std::size_t channels);

// ---------------------------------------------------------------------------
// Builders (register parameters, apply the model initialization)
// ---------------------------------------------------------------------------

ConvParams make_conv(ParamBuilder pb, std::size_t c_in, std::size_t c_out, std::size_t kernel,
                     std::size_t stride = 1);
GroupNormParams make_group_norm(ParamBuilder pb, std::size_t channels, std::size_t groups);
ConvUnitParams make_conv_unit(ParamBuilder pb, std::size_t c_in, std::size_t c_out,
                              std::size_t stride);
ChannelAttentionParams make_channel_attention(ParamBuilder pb, std::size_t channels);
SelfAttentionParams make_self_attention(ParamBuilder pb, std::size_t channels);
SppfParams make_sppf(ParamBuilder pb, std::size_t channels);
C3k2Params make_c3k2(ParamBuilder pb, std::size_t c_in, std::size_t c_out);
C2psaParams make_c2psa(ParamBuilder pb, std::size_t channels);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const ConvParams& p);
Tensor group_norm(const Tensor& x, const GroupNormParams& p);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Same-size sliding max (stride 1, pad k / 2, padding never wins).
Tensor max_pool2d(const Tensor& x, std::size_t kernel = 5);
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
/// [N, C, H, W] -> [N, C, 1, 1]
Tensor global_avg_pool(const Tensor& x);
/// x [N, C, H, W] scaled by gate [N, C, 1, 1].
Tensor scale_channels(const Tensor& x, const Tensor& gate);
/// Per-pixel softmax over the channel axis of [N, K, H, W].
Tensor softmax_channels(const Tensor& x);

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

Tensor conv_unit(const Tensor& x, const ConvUnitParams& p);
Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p);
/// `attention_out`, when given, receives the [N, HW, HW] row-stochastic map.
Tensor self_attention(const Tensor& x, const SelfAttentionParams& p,
                      Tensor* attention_out = nullptr);
Tensor sppf(const Tensor& x, const SppfParams& p);
Tensor bottleneck(const Tensor& x, const BottleneckParams& p);
Tensor c3k2_block(const Tensor& x, const C3k2Params& p);
Tensor c2psa_block(const Tensor& x, const C2psaParams& p);

}  // namespace ymwml::nn
