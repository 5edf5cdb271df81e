#include <cmath>
#include <string>

#include "ymwml/nn.hpp"

namespace ymwml::nn {

ConvParams make_conv(ParamBuilder pb, std::size_t c_in, std::size_t c_out, std::size_t kernel,
                     std::size_t stride) {
  if (kernel != 1 && kernel != 3) throw Error(Errc::invalid_argument, "conv kernel must be 1 or 3");
  ConvParams p;
  p.weight = pb.kaiming("weight", {c_out, c_in, kernel, kernel}, c_in * kernel * kernel);
  p.bias = pb.constant("bias", {c_out}, 0.0);
  p.stride = stride;
  return p;
}

GroupNormParams make_group_norm(ParamBuilder pb, std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw Error(Errc::config, std::to_string(channels) + " channels not divisible into " +
                                  std::to_string(groups) + " groups");
  }
  GroupNormParams p;
  p.gamma = pb.constant("gamma", {channels}, 1.0);
  p.beta = pb.constant("beta", {channels}, 0.0);
  p.groups = groups;
  return p;
}

ConvUnitParams make_conv_unit(ParamBuilder pb, std::size_t c_in, std::size_t c_out,
                              std::size_t stride) {
  return {make_conv(pb.scope("conv"), c_in, c_out, 3, stride),
          make_group_norm(pb.scope("norm"), c_out, default_groups(c_out))};
}

ChannelAttentionParams make_channel_attention(ParamBuilder pb, std::size_t channels) {
  if (channels < kChannelAttentionRatio) {
    throw Error(Errc::invalid_argument, "channel attention needs at least " +
                                            std::to_string(kChannelAttentionRatio) + " channels");
  }
  const std::size_t hidden = channels / kChannelAttentionRatio;
  return {make_conv(pb.scope("reduce"), channels, hidden, 1),
          make_conv(pb.scope("expand"), hidden, channels, 1)};
}

SelfAttentionParams make_self_attention(ParamBuilder pb, std::size_t channels) {
  const std::size_t inner = std::max<std::size_t>(channels / 8, 1);
  SelfAttentionParams p;
  p.query = make_conv(pb.scope("query"), channels, inner, 1);
  p.key = make_conv(pb.scope("key"), channels, inner, 1);
  p.value = make_conv(pb.scope("value"), channels, channels, 1);
  p.gain = pb.constant("gain", {1}, 0.0);
  return p;
}

SppfParams make_sppf(ParamBuilder pb, std::size_t channels) {
  if (channels % 2 != 0) throw Error(Errc::invalid_argument, "sppf needs an even channel count");
  return {make_conv(pb.scope("reduce"), channels, channels / 2, 1),
          make_conv(pb.scope("fuse"), 2 * channels, channels, 1)};
}

namespace {

BottleneckParams make_bottleneck(ParamBuilder pb, std::size_t channels) {
  const std::size_t groups = default_groups(channels);
  return {make_conv(pb.scope("conv1"), channels, channels, 3),
          make_group_norm(pb.scope("norm1"), channels, groups),
          make_conv(pb.scope("conv2"), channels, channels, 3),
          make_group_norm(pb.scope("norm2"), channels, groups)};
}

}  // namespace

C3k2Params make_c3k2(ParamBuilder pb, std::size_t c_in, std::size_t c_out) {
  if (c_out % 2 != 0) throw Error(Errc::invalid_argument, "c3k2 needs an even output channel count");
  const std::size_t half = c_out / 2;
  C3k2Params p;
  p.expand = make_conv(pb.scope("expand"), c_in, c_out, 1);
  p.bottleneck[0] = make_bottleneck(pb.scope("bottleneck0"), half);
  p.bottleneck[1] = make_bottleneck(pb.scope("bottleneck1"), half);
  p.fuse = make_conv(pb.scope("fuse"), 3 * half, c_out, 1);
  return p;
}

C2psaParams make_c2psa(ParamBuilder pb, std::size_t channels) {
  if (channels % 2 != 0) throw Error(Errc::invalid_argument, "c2psa needs an even channel count");
  C2psaParams p;
  p.expand = make_conv(pb.scope("expand"), channels, channels, 1);
  p.attention = make_self_attention(pb.scope("attention"), channels / 2);
  p.fuse = make_conv(pb.scope("fuse"), channels, channels, 1);
  return p;
}

Tensor conv_unit(const Tensor& x, const ConvUnitParams& p) {
  return relu(group_norm(conv2d(x, p.conv), p.norm));
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p) {
  if (x.size(1) < kChannelAttentionRatio) {
    throw Error(Errc::invalid_argument, "channel_attention: fewer channels than the reduction ratio");
  }
  Tensor squeezed = global_avg_pool(x);
  Tensor gate = sigmoid(conv2d(relu(conv2d(squeezed, p.reduce)), p.expand));
  return scale_channels(x, gate);
}

Tensor self_attention(const Tensor& x, const SelfAttentionParams& p, Tensor* attention_out) {
  const std::size_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t tokens = h * w;
  if (tokens > kMaxAttentionTokens) {
    throw Error(Errc::invalid_shape, "self_attention: " + std::to_string(tokens) +
                                         " tokens exceeds the limit of " +
                                         std::to_string(kMaxAttentionTokens));
  }
  const std::size_t inner = p.query.out_channels();
  Tensor q = ops::reshape(conv2d(x, p.query), {n, inner, tokens});
  Tensor k = ops::reshape(conv2d(x, p.key), {n, inner, tokens});
  Tensor v = ops::reshape(conv2d(x, p.value), {n, c, tokens});
  Tensor scores = ops::bmm(q, k, /*transpose_a=*/true) * (1.0 / std::sqrt(double(inner)));
  Tensor attention = ops::softmax_last(scores);
  if (attention_out) *attention_out = attention;
  Tensor mixed = ops::reshape(ops::bmm(v, attention, false, /*transpose_b=*/true), {n, c, h, w});
  return x + mixed * p.gain;
}

Tensor sppf(const Tensor& x, const SppfParams& p) {
  if (x.size(1) % 2 != 0) throw Error(Errc::invalid_argument, "sppf: odd channel count");
  Tensor y0 = conv2d(x, p.reduce);
  Tensor y1 = max_pool2d(y0, 5);
  Tensor y2 = max_pool2d(y1, 5);
  Tensor y3 = max_pool2d(y2, 5);
  return conv2d(ops::concat({y0, y1, y2, y3}, 1), p.fuse);
}

Tensor bottleneck(const Tensor& x, const BottleneckParams& p) {
  Tensor h = relu(group_norm(conv2d(x, p.conv1), p.norm1));
  return x + group_norm(conv2d(h, p.conv2), p.norm2);
}

Tensor c3k2_block(const Tensor& x, const C3k2Params& p) {
  Tensor y = conv2d(x, p.expand);
  const std::size_t half = y.size(1) / 2;
  Tensor a = ops::slice(y, 1, 0, half);
  Tensor b = ops::slice(y, 1, half, half);
  Tensor b1 = bottleneck(b, p.bottleneck[0]);
  Tensor b2 = bottleneck(b1, p.bottleneck[1]);
  return conv2d(ops::concat({a, b1, b2}, 1), p.fuse);
}

Tensor c2psa_block(const Tensor& x, const C2psaParams& p) {
  if (x.size(1) % 2 != 0) throw Error(Errc::invalid_argument, "c2psa: odd channel count");
  Tensor y = conv2d(x, p.expand);
  const std::size_t half = y.size(1) / 2;
  Tensor a = ops::slice(y, 1, 0, half);
  Tensor b = self_attention(ops::slice(y, 1, half, half), p.attention);
  return conv2d(ops::concat({a, b}, 1), p.fuse);
}

}  // namespace ymwml::nn
