#include "ymwml/model.hpp"

#include <cmath>
#include <string>

namespace ymwml {

namespace {

constexpr std::array<std::size_t, 5> kLadder = {64, 128, 256, 512, 512};
constexpr std::size_t kStemBase = 32;
// The classifier starts 100x below the Kaiming bound so the initial softmax
// is close to uniform. With the full bound a few pixels start confidently
// wrong, and the exponential loss barely pushes on saturated softmax outputs:
// the RV class never recovers.
constexpr double kClassifierInitScale = 0.01;

}  // namespace

std::size_t ModelConfig::channels(std::size_t base) const {
  const auto scaled = static_cast<std::size_t>(std::llround(double(base) * width));
  const std::size_t aligned = (scaled + gn_groups - 1) / gn_groups * gn_groups;
  return std::max(aligned, gn_groups);
}

void ModelConfig::validate() const {
  if (!(width > 0.0 && width <= 1.0)) throw Error(Errc::config, "width must lie in (0, 1]");
  if (gn_groups == 0) throw Error(Errc::config, "gn_groups must be positive");
  if (in_channels == 0) throw Error(Errc::config, "in_channels must be positive");
  if (num_classes < 2) throw Error(Errc::config, "num_classes must be at least 2");
  if (input_size == 0 || input_size % 32 != 0) {
    throw Error(Errc::config, "input_size must be a positive multiple of 32");
  }
  // The narrowest stage must still receive at least one channel before the
  // gn_groups alignment kicks in.
  if (std::llround(double(kStemBase) * width) < 1) {
    throw Error(Errc::config, "width " + std::to_string(width) +
                                  " leaves the stem with no channels (below gn_groups)");
  }
}

std::vector<StageShape> shape_report(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t s = cfg.input_size;
  auto c = [&](std::size_t base) { return cfg.channels(base); };
  std::vector<StageShape> rows;
  rows.push_back({"input", s, cfg.in_channels});
  rows.push_back({"stem", s, c(kStemBase)});
  for (std::size_t i = 0; i < kLadder.size(); ++i) {
    const std::size_t stride = std::size_t{2} << i;
    rows.push_back({"backbone/" + std::to_string(stride), s / stride, c(kLadder[i])});
  }
  rows.push_back({"neck/sppf", s / 32, c(512)});
  rows.push_back({"neck/c2psa", s / 32, c(512)});
  rows.push_back({"neck/topdown16", s / 16, c(256)});
  rows.push_back({"neck/topdown8", s / 8, c(128)});
  rows.push_back({"neck/bottomup16", s / 16, c(256)});
  rows.push_back({"neck/bottomup32", s / 32, c(512)});
  rows.push_back({"head/in8", s / 8, c(128)});
  rows.push_back({"head/in16", s / 16, c(256)});
  rows.push_back({"head/in32", s / 32, c(512)});
  rows.push_back({"head/fuse16", s / 16, c(256)});
  rows.push_back({"head/fuse8", s / 8, c(128)});
  rows.push_back({"head/refine", s / 8, c(64)});
  rows.push_back({"head/upsample", s, c(64)});
  rows.push_back({"head/out", s, cfg.num_classes});
  return rows;
}

Model::Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  auto c = [&](std::size_t base) { return cfg_.channels(base); };
  ParamBuilder root(params_, rng);

  stem_ = nn::make_conv_unit(root.scope("stem"), cfg_.in_channels, c(kStemBase), 1);
  std::size_t prev = c(kStemBase);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    ParamBuilder pb = root.scope("backbone.block" + std::to_string(i + 1));
    const std::size_t out = c(kLadder[i]);
    blocks_[i].keep = nn::make_conv_unit(pb.scope("keep"), prev, out, 1);
    blocks_[i].down = nn::make_conv_unit(pb.scope("down"), out, out, 2);
    prev = out;
  }

  ParamBuilder neck = root.scope("neck");
  sppf_ = nn::make_sppf(neck.scope("sppf"), c(512));
  c2psa_ = nn::make_c2psa(neck.scope("c2psa"), c(512));
  top_down16_ = nn::make_c3k2(neck.scope("topdown16"), c(512) + c(512), c(256));
  top_down8_ = nn::make_c3k2(neck.scope("topdown8"), c(256) + c(256), c(128));
  down8_ = nn::make_conv_unit(neck.scope("down8"), c(128), c(128), 2);
  bottom_up16_ = nn::make_c3k2(neck.scope("bottomup16"), c(128) + c(256), c(256));
  down16_ = nn::make_conv_unit(neck.scope("down16"), c(256), c(256), 2);
  bottom_up32_ = nn::make_c3k2(neck.scope("bottomup32"), c(256) + c(512), c(512));

  ParamBuilder head = root.scope("head");
  ca8_ = nn::make_channel_attention(head.scope("ca8"), c(128));
  ca16_ = nn::make_channel_attention(head.scope("ca16"), c(256));
  ca32_ = nn::make_channel_attention(head.scope("ca32"), c(512));
  project32_ = nn::make_conv(head.scope("project32"), c(512), c(256), 1);
  sa16_ = nn::make_self_attention(head.scope("sa16"), c(256));
  project16_ = nn::make_conv(head.scope("project16"), c(256), c(128), 1);
  sa8_ = nn::make_self_attention(head.scope("sa8"), c(128));
  refine_ = nn::make_conv_unit(head.scope("refine"), c(128), c(64), 1);
  const std::size_t classifier_in = c(64) + (cfg_.stem_skip ? c(kStemBase) : 0);
  classifier_ = nn::make_conv(head.scope("classifier"), classifier_in, cfg_.num_classes, 3);
  for (double& v : classifier_.weight.data()) v *= kClassifierInitScale;
}

Tensor Model::forward(const Tensor& x, ForwardTrace* trace, const ForwardOptions& options) const {
  const Shape expected{x.dim() == 4 ? x.size(0) : 0, cfg_.in_channels, cfg_.input_size,
                       cfg_.input_size};
  if (x.shape() != expected) {
    throw Error(Errc::shape_mismatch, "model input " + shape_str(x.shape()) +
                                          " does not match configured " + shape_str(expected));
  }
  auto note = [trace](const char* stage, const Tensor& t) {
    if (trace) trace->stages.emplace_back(stage, t.shape());
  };

  Tensor stem = nn::conv_unit(x, stem_);
  note("stem", stem);
  std::array<Tensor, 5> taps;
  Tensor h = stem;
  static constexpr const char* kBlockNames[] = {"backbone/2", "backbone/4", "backbone/8",
                                                "backbone/16", "backbone/32"};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = nn::conv_unit(nn::conv_unit(h, blocks_[i].keep), blocks_[i].down);
    taps[i] = h;
    note(kBlockNames[i], h);
  }

  Tensor deep = nn::sppf(taps[4], sppf_);
  note("neck/sppf", deep);
  deep = nn::c2psa_block(deep, c2psa_);
  note("neck/c2psa", deep);
  Tensor t16 = nn::c3k2_block(ops::concat({nn::upsample_nearest(deep, 2), taps[3]}, 1), top_down16_);
  note("neck/topdown16", t16);
  Tensor t8 = nn::c3k2_block(ops::concat({nn::upsample_nearest(t16, 2), taps[2]}, 1), top_down8_);
  note("neck/topdown8", t8);
  Tensor p16 = nn::c3k2_block(ops::concat({nn::conv_unit(t8, down8_), t16}, 1), bottom_up16_);
  note("neck/bottomup16", p16);
  Tensor p32 = nn::c3k2_block(ops::concat({nn::conv_unit(p16, down16_), deep}, 1), bottom_up32_);
  note("neck/bottomup32", p32);

  if (trace) trace->head_inputs = {t8, p16, p32};
  Tensor in8 = nn::channel_attention(t8, ca8_);
  Tensor in16 = nn::channel_attention(p16, ca16_);
  Tensor in32 = nn::channel_attention(p32, ca32_);
  note("head/in8", in8);
  note("head/in16", in16);
  note("head/in32", in32);

  Tensor fuse16 = nn::conv2d(nn::upsample_nearest(in32, 2), project32_) + in16;
  if (!options.bypass_head_attention) fuse16 = nn::self_attention(fuse16, sa16_);
  note("head/fuse16", fuse16);
  Tensor fuse8 = nn::conv2d(nn::upsample_nearest(fuse16, 2), project16_) + in8;
  if (!options.bypass_head_attention) fuse8 = nn::self_attention(fuse8, sa8_);
  note("head/fuse8", fuse8);

  Tensor refined = nn::conv_unit(fuse8, refine_);
  note("head/refine", refined);
  Tensor up = nn::upsample_nearest(refined, 8);
  note("head/upsample", up);
  if (cfg_.stem_skip) up = ops::concat({up, stem}, 1);
  Tensor logits = nn::conv2d(up, classifier_);
  note("head/out", logits);
  return logits;
}

void Model::load_parameters(const ParameterStore& source) {
  if (source.size() != params_.size()) {
    throw Error(Errc::shape_mismatch, "checkpoint holds " + std::to_string(source.size()) +
                                          " tensors, model expects " +
                                          std::to_string(params_.size()));
  }
  for (const auto& [name, tensor] : params_) {
    if (!source.contains(name)) {
      throw Error(Errc::shape_mismatch, "checkpoint is missing tensor " + name);
    }
    const Tensor& src = source.at(name);
    if (src.shape() != tensor.shape()) {
      throw Error(Errc::shape_mismatch, "tensor " + name + " has shape " + shape_str(src.shape()) +
                                            " in checkpoint but " + shape_str(tensor.shape()) +
                                            " in model");
    }
  }
  for (auto& [name, tensor] : params_) {
    auto src = source.at(name).data();
    std::copy(src.begin(), src.end(), tensor.data().begin());
  }
}

}  // namespace ymwml
