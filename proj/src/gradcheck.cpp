#include "ymwml/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ymwml/model.hpp"
#include "ymwml/nn.hpp"
#include "ymwml/wme_loss.hpp"

namespace ymwml::gradcheck {

namespace {

Tensor leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::uniform(shape, rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

double contract(const Case& c, const Tensor& weights) {
  NoGradGuard guard;
  const Tensor out = c.fn(c.inputs);
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * weights[i];
  return acc;
}

}  // namespace

Result check(const Case& c, const Options& options) {
  Tape& tape = Tape::active();
  tape.reset();
  for (auto t : c.inputs) t.zero_grad();

  Rng rng(options.seed);
  Tensor out = c.fn(c.inputs);
  const Tensor weights = Tensor::uniform(out.shape(), rng, 0.5, 1.5);
  Tensor loss = ops::sum(ops::mul(out, weights));
  backward(loss);
  tape.reset();

  Result r;
  r.name = c.name;
  for (auto input : c.inputs) {
    auto data = input.data();
    std::vector<std::size_t> coords;
    if (c.coords_per_input == 0 || c.coords_per_input >= data.size()) {
      for (std::size_t i = 0; i < data.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t k = 0; k < c.coords_per_input; ++k) {
        coords.push_back(std::min(data.size() - 1, std::size_t(rng.uniform() * double(data.size()))));
      }
    }
    for (std::size_t i : coords) {
      const double saved = data[i];
      data[i] = saved + options.h;
      const double up = contract(c, weights);
      data[i] = saved - options.h;
      const double down = contract(c, weights);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = input.grad()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      r.worst = std::max(r.worst, std::isfinite(err) ? err : INFINITY);
      ++r.probes;
    }
  }
  r.passed = r.worst < options.tolerance;
  return r;
}

std::vector<Case> op_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Case> cases;
  using In = const std::vector<Tensor>&;
  auto add = [&](std::string name, std::vector<Tensor> inputs, auto fn) {
    cases.push_back({std::move(name), std::move(inputs), fn, 0});
  };

  add("add", {leaf({2, 3}, rng), leaf({2, 3}, rng)}, [](In v) { return ops::add(v[0], v[1]); });
  add("sub", {leaf({2, 3}, rng), leaf({2, 3}, rng)}, [](In v) { return ops::sub(v[0], v[1]); });
  add("mul", {leaf({2, 3}, rng), leaf({2, 3}, rng)}, [](In v) { return ops::mul(v[0], v[1]); });
  add("div", {leaf({2, 3}, rng), leaf({2, 3}, rng, 0.5, 2.0)},
      [](In v) { return ops::div(v[0], v[1]); });
  add("mul_broadcast", {leaf({2, 3}, rng), leaf({1}, rng)},
      [](In v) { return ops::mul(v[0], v[1]); });
  add("div_broadcast", {leaf({2, 3}, rng), leaf({1}, rng, 0.5, 2.0)},
      [](In v) { return ops::div(v[0], v[1]); });
  add("scalar_ops", {leaf({2, 3}, rng)}, [](In v) {
    return ops::ew(ops::Binary::div, ops::ew(ops::Binary::sub, v[0] * 3.0 + 1.0, 0.5), 2.0);
  });
  add("neg", {leaf({4}, rng)}, [](In v) { return ops::neg(v[0]); });
  add("exp", {leaf({2, 3}, rng)}, [](In v) { return ops::exp(v[0]); });
  add("log", {leaf({2, 3}, rng, 0.5, 2.0)}, [](In v) { return ops::log(v[0]); });
  add("sum_axis", {leaf({2, 3, 4}, rng)},
      [](In v) { return ops::reduce(v[0], {1}, ops::Reduce::sum); });
  add("mean_axes", {leaf({2, 3, 4}, rng)},
      [](In v) { return ops::reduce(v[0], {0, 2}, ops::Reduce::mean); });
  add("max_axis", {leaf({2, 3, 4}, rng)},
      [](In v) { return ops::reduce(v[0], {2}, ops::Reduce::max); });
  add("max_all", {leaf({2, 3}, rng)}, [](In v) { return ops::reduce(v[0], {}, ops::Reduce::max); });
  add("reshape", {leaf({2, 3}, rng)}, [](In v) { return ops::reshape(v[0], {3, 2}); });
  add("concat", {leaf({2, 1, 3}, rng), leaf({2, 2, 3}, rng)},
      [](In v) { return ops::concat({v[0], v[1]}, 1); });
  add("slice", {leaf({2, 4, 3}, rng)}, [](In v) { return ops::slice(v[0], 1, 1, 2); });
  add("bmm", {leaf({2, 2, 3}, rng), leaf({2, 3, 4}, rng)},
      [](In v) { return ops::bmm(v[0], v[1]); });
  add("bmm_tt", {leaf({2, 3, 2}, rng), leaf({2, 4, 3}, rng)},
      [](In v) { return ops::bmm(v[0], v[1], true, true); });
  add("softmax_last", {leaf({2, 3, 4}, rng, -2, 2)}, [](In v) { return ops::softmax_last(v[0]); });

  auto conv_case = [&](std::string name, std::size_t c_in, std::size_t c_out, std::size_t k,
                       std::size_t stride) {
    add(std::move(name), {leaf({2, c_in, 4, 4}, rng), leaf({c_out, c_in, k, k}, rng), leaf({c_out}, rng)},
        [stride](In v) { return nn::conv2d(v[0], {v[1], v[2], stride}); });
  };
  conv_case("conv3x3", 3, 2, 3, 1);
  conv_case("conv3x3_s2", 3, 2, 3, 2);
  conv_case("conv1x1", 3, 2, 1, 1);
  conv_case("conv1x1_s2", 2, 3, 1, 2);

  add("group_norm", {leaf({2, 4, 3, 3}, rng), leaf({4}, rng, 0.5, 1.5), leaf({4}, rng)},
      [](In v) { return nn::group_norm(v[0], {v[1], v[2], 2, 1e-5}); });
  add("relu", {leaf({2, 3, 4}, rng)}, [](In v) { return nn::relu(v[0]); });
  add("sigmoid", {leaf({2, 3, 4}, rng, -4, 4)}, [](In v) { return nn::sigmoid(v[0]); });
  add("max_pool2d", {leaf({2, 3, 4, 4}, rng)}, [](In v) { return nn::max_pool2d(v[0], 5); });
  add("max_pool2d_k3", {leaf({1, 2, 4, 4}, rng)}, [](In v) { return nn::max_pool2d(v[0], 3); });
  add("upsample_nearest", {leaf({2, 3, 2, 2}, rng)},
      [](In v) { return nn::upsample_nearest(v[0], 2); });
  add("global_avg_pool", {leaf({2, 3, 4, 4}, rng)}, [](In v) { return nn::global_avg_pool(v[0]); });
  add("scale_channels", {leaf({2, 3, 4, 4}, rng), leaf({2, 3, 1, 1}, rng)},
      [](In v) { return nn::scale_channels(v[0], v[1]); });
  add("softmax_channels", {leaf({2, 3, 4, 4}, rng, -2, 2)},
      [](In v) { return nn::softmax_channels(v[0]); });

  // Composite blocks, with norm/attention parameters moved off their
  // initial values so every branch carries gradient.
  auto block = [&](std::string name, Shape shape, auto build, auto apply) {
    auto store = std::make_shared<ParameterStore>();
    ParamBuilder pb(*store, rng);
    auto params = std::make_shared<decltype(build(pb))>(build(pb));
    std::vector<Tensor> inputs{leaf(shape, rng)};
    for (auto& [pname, t] : *store) {
      auto d = t.data();
      if (pname.ends_with("gamma")) {
        for (auto& x : d) x = rng.uniform(0.5, 1.5);
      } else if (pname.ends_with("beta") || pname.ends_with("bias")) {
        for (auto& x : d) x = rng.uniform(-0.5, 0.5);
      } else if (pname.ends_with("gain")) {
        for (auto& x : d) x = rng.uniform(0.5, 1.0);
      }
      inputs.push_back(t);
    }
    add(std::move(name), inputs,
        [store, params, apply](In v) { return apply(v[0], *params); });
  };
  block("conv_unit", {2, 3, 4, 4},
        [](ParamBuilder pb) { return nn::make_conv_unit(pb, 3, 4, 1); },
        [](const Tensor& x, const nn::ConvUnitParams& p) { return nn::conv_unit(x, p); });
  block("channel_attention", {2, 4, 3, 3},
        [](ParamBuilder pb) { return nn::make_channel_attention(pb, 4); },
        [](const Tensor& x, const nn::ChannelAttentionParams& p) { return nn::channel_attention(x, p); });
  block("self_attention", {2, 3, 3, 3},
        [](ParamBuilder pb) { return nn::make_self_attention(pb, 3); },
        [](const Tensor& x, const nn::SelfAttentionParams& p) { return nn::self_attention(x, p); });
  block("sppf", {1, 2, 4, 4}, [](ParamBuilder pb) { return nn::make_sppf(pb, 2); },
        [](const Tensor& x, const nn::SppfParams& p) { return nn::sppf(x, p); });
  block("c3k2", {1, 4, 4, 4}, [](ParamBuilder pb) { return nn::make_c3k2(pb, 4, 4); },
        [](const Tensor& x, const nn::C3k2Params& p) { return nn::c3k2_block(x, p); });
  block("c2psa", {1, 4, 4, 4}, [](ParamBuilder pb) { return nn::make_c2psa(pb, 4); },
        [](const Tensor& x, const nn::C2psaParams& p) { return nn::c2psa_block(x, p); });
  return cases;
}

std::vector<Case> loss_cases(std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::size_t kClasses = 4;
  auto masks = std::make_shared<LabelMask>();
  masks->batch = 2;
  masks->height = 3;
  masks->width = 4;
  for (std::size_t i = 0; i < 24; ++i) {
    masks->labels.push_back(static_cast<std::uint8_t>(rng.uniform() * kClasses));
  }
  const auto weights = std::make_shared<ClassWeights>(
      compute_class_rates(std::span<const LabelMask>(masks.get(), 1), kClasses));
  const WmeParams params{2.0, 1.0};
  using In = const std::vector<Tensor>&;

  std::vector<Case> cases;
  for (auto red : {Reduction::sum, Reduction::mean}) {
    const std::string suffix = red == Reduction::sum ? "_sum" : "_mean";
    cases.push_back({"wme" + suffix, {leaf({2, kClasses, 3, 4}, rng, -2, 2)},
                     [=](In v) { return wme_batch_loss(v[0], *masks, *weights, params, red); }});
    cases.push_back({"wme_composed" + suffix, {leaf({2, kClasses, 3, 4}, rng, -2, 2)},
                     [=](In v) { return wme_batch_loss_composed(v[0], *masks, *weights, params, red); }});
    cases.push_back({"cross_entropy" + suffix, {leaf({2, kClasses, 3, 4}, rng, -2, 2)},
                     [=](In v) { return cross_entropy_loss(v[0], *masks, red); }});
  }
  cases.push_back({"wme_beta1_zero", {leaf({2, kClasses, 3, 4}, rng, -2, 2)},
                   [=](In v) { return wme_batch_loss(v[0], *masks, *weights, {0.0, 1.0}); }});
  return cases;
}

Case model_case(std::uint64_t seed, std::size_t coords_per_input) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.width = 0.125;
  cfg.input_size = 32;
  auto model = std::make_shared<Model>(cfg, rng);
  for (auto& [name, t] : model->parameters()) {
    auto d = t.data();
    if (name.ends_with("gamma")) {
      for (auto& x : d) x = rng.uniform(0.8, 1.2);
    } else if (name.ends_with("beta") || name.ends_with("bias")) {
      for (auto& x : d) x = rng.uniform(-0.1, 0.1);
    } else if (name.ends_with("gain")) {
      for (auto& x : d) x = rng.uniform(0.3, 0.6);
    }
  }
  auto masks = std::make_shared<LabelMask>();
  masks->batch = 1;
  masks->height = masks->width = cfg.input_size;
  for (std::size_t i = 0; i < cfg.input_size * cfg.input_size; ++i) {
    masks->labels.push_back(static_cast<std::uint8_t>(rng.uniform() * double(cfg.num_classes)));
  }
  const auto weights = std::make_shared<ClassWeights>(
      compute_class_rates(std::span<const LabelMask>(masks.get(), 1), cfg.num_classes));

  Case c;
  c.name = "model_w0.125_s32";
  c.inputs.push_back(leaf({1, 1, cfg.input_size, cfg.input_size}, rng, 0.0, 1.0));
  for (auto& [name, t] : model->parameters()) c.inputs.push_back(t);
  c.fn = [model, masks, weights](const std::vector<Tensor>& v) {
    return wme_batch_loss(model->forward(v[0]), *masks, *weights, {}, Reduction::mean);
  };
  c.coords_per_input = coords_per_input;
  return c;
}

std::vector<Result> curvature_checks(double tolerance) {
  const WmeParams params{2.0, 1.0};
  constexpr std::size_t kClasses = 4;
  // L(p) with mass 1 - p spread evenly over the wrong classes; the loss
  // only sees that total, so the spread is immaterial.
  auto loss_at = [&](double lambda, double p) {
    ClassWeights w;
    w.lambda.assign(kClasses, lambda);
    w.cr.assign(kClasses, 1.0 / kClasses);
    std::vector<double> probs(kClasses, (1.0 - p) / double(kClasses - 1));
    probs[0] = p;
    return wme_pixel_loss(probs, 0, w, params).loss;
  };
  auto second_difference = [&](double lambda, double p, double h) {
    return (loss_at(lambda, p + h) - 2.0 * loss_at(lambda, p) + loss_at(lambda, p - h)) / (h * h);
  };

  std::vector<Result> results;
  for (double lambda : {std::exp(-1.0), 0.8, 1.0}) {
    Result positive{"curvature_positive_lambda_" + std::to_string(lambda), 0.0, 0, true};
    Result match{"curvature_match_lambda_" + std::to_string(lambda), 0.0, 0, true};
    constexpr double h = 1e-2;
    for (int i = 1; i <= 99; ++i) {
      const double p = i / 100.0;
      const double plain = second_difference(lambda, p, h);
      positive.passed = positive.passed && plain > 0.0;
      ++positive.probes;
      // Richardson extrapolation cancels the h^2 truncation term so the
      // comparison is limited by rounding (~1e-10), not by the stencil.
      const double refined = (4.0 * second_difference(lambda, p, h / 2) - plain) / 3.0;
      const double analytic =
          lambda * params.beta1 * std::exp(-p) + params.beta2 * std::exp(1.0 - p);
      match.worst = std::max(match.worst, std::abs(refined - analytic));
      ++match.probes;
    }
    positive.worst = 0.0;
    match.passed = match.worst < tolerance;
    results.push_back(positive);
    results.push_back(match);
  }
  return results;
}

}  // namespace ymwml::gradcheck
