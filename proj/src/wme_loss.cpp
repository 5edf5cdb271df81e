#include "ymwml/wme_loss.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <string>

#include "ymwml/nn.hpp"
#include "ymwml/ops.hpp"
#include "ymwml/tape.hpp"

namespace ymwml {

LabelMask LabelMask::single(std::size_t height, std::size_t width,
                            std::vector<std::uint8_t> labels) {
  if (labels.size() != height * width) {
    throw Error(Errc::invalid_shape, "mask needs " + std::to_string(height * width) + " labels");
  }
  return LabelMask{1, height, width, std::move(labels)};
}

void LabelMask::check_range(std::size_t num_classes) const {
  for (auto v : labels) {
    if (v >= num_classes) {
      throw Error(Errc::range, "mask value " + std::to_string(v) + " outside [0, " +
                                   std::to_string(num_classes) + ")");
    }
  }
}

ClassWeights ClassWeights::from_rates(std::vector<double> cr) {
  double total = 0.0;
  for (double r : cr) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(Errc::invalid_argument, "class rate outside [0, 1]");
    total += r;
  }
  if (cr.empty() || std::abs(total - 1.0) > 1e-9) {
    throw Error(Errc::invalid_argument, "class rates must sum to 1");
  }
  ClassWeights w;
  w.lambda.reserve(cr.size());
  for (double r : cr) w.lambda.push_back(std::exp(-r));
  w.cr = std::move(cr);
  return w;
}

ClassWeights ClassWeights::uniform(std::size_t num_classes) {
  ClassWeights w;
  w.cr.assign(num_classes, 1.0 / double(num_classes));
  w.lambda.assign(num_classes, 1.0);
  return w;
}

ClassWeights compute_class_rates(std::span<const LabelMask> masks, std::size_t num_classes) {
  if (masks.empty()) throw Error(Errc::empty_input, "no masks to compute class rates from");
  std::vector<std::uint64_t> counts(num_classes, 0);
  std::uint64_t total = 0;
  for (const auto& m : masks) {
    m.check_range(num_classes);
    for (auto v : m.labels) ++counts[v];
    total += m.labels.size();
  }
  if (total == 0) throw Error(Errc::empty_input, "masks contain no pixels");
  std::vector<double> cr(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) cr[k] = double(counts[k]) / double(total);
  return ClassWeights::from_rates(std::move(cr));
}

WmePixelTerms wme_pixel_loss(std::span<const double> probs, std::size_t true_class,
                             const ClassWeights& weights, const WmeParams& params) {
  if (true_class >= probs.size()) {
    throw Error(Errc::range, "true class " + std::to_string(true_class) + " outside [0, " +
                                 std::to_string(probs.size()) + ")");
  }
  if (weights.num_classes() != probs.size()) {
    throw Error(Errc::shape_mismatch, "class weights and probabilities disagree on K");
  }
  double others = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!std::isfinite(probs[j])) throw Error(Errc::non_finite, "non-finite probability");
    if (j != true_class) others += probs[j];
  }
  const double t1 = weights.lambda[true_class] * params.beta1 * std::exp(-probs[true_class]);
  const double t2 = params.beta2 * std::exp(others);
  return {t1 + t2, t1, t2};
}

namespace {

void check_loss_inputs(const Tensor& logits, const LabelMask& masks, std::size_t weight_classes) {
  if (logits.dim() != 4) {
    throw Error(Errc::shape_mismatch, "loss expects logits [N,K,H,W], got " +
                                          shape_str(logits.shape()));
  }
  if (masks.batch != logits.size(0) || masks.height != logits.size(2) ||
      masks.width != logits.size(3) || masks.labels.size() != masks.batch * masks.height * masks.width) {
    throw Error(Errc::shape_mismatch, "mask [" + std::to_string(masks.batch) + "," +
                                          std::to_string(masks.height) + "," +
                                          std::to_string(masks.width) +
                                          "] does not match logits " + shape_str(logits.shape()));
  }
  if (weight_classes != 0 && weight_classes != logits.size(1)) {
    throw Error(Errc::shape_mismatch, "class weights have K=" + std::to_string(weight_classes) +
                                          " but logits have K=" + std::to_string(logits.size(1)));
  }
  masks.check_range(logits.size(1));
}

double reduction_scale(Reduction r, std::size_t pixels) {
  return r == Reduction::mean ? 1.0 / double(pixels) : 1.0;
}

}  // namespace

Tensor wme_batch_loss(const Tensor& logits, const LabelMask& masks, const ClassWeights& weights,
                      const WmeParams& params, Reduction reduction) {
  check_loss_inputs(logits, masks, weights.num_classes());
  const std::size_t n = logits.size(0), k = logits.size(1);
  const std::size_t hw = logits.size(2) * logits.size(3);
  const double scale = reduction_scale(reduction, n * hw);

  std::vector<double> probs(logits.numel());
  auto z = logits.data();
  double total = 0.0;
  std::vector<double> p(k);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = s * k * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      double mx = z[base + i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[base + c * hw + i]);
      double norm = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        p[c] = std::exp(z[base + c * hw + i] - mx);
        norm += p[c];
      }
      for (std::size_t c = 0; c < k; ++c) {
        p[c] /= norm;
        probs[base + c * hw + i] = p[c];
      }
      total += wme_pixel_loss(p, masks.labels[s * hw + i], weights, params).loss;
    }
  }
  Tensor out = Tensor::scalar(total * scale);
  ops::check_finite("wme_batch_loss", out);

  Tape& tape = Tape::active();
  if (tape.should_record({&logits})) {
    tape.record("wme_batch_loss", {logits}, out,
                [n, k, hw, scale, probs = std::move(probs), labels = masks.labels,
                 lambda = weights.lambda, params](Node& node) {
                  Tensor& logits = node.inputs[0];
                  if (!logits.requires_grad()) return;
                  const double upstream = node.output.grad()[0] * scale;
                  auto gz = logits.grad();
                  std::vector<double> g(k);
                  for (std::size_t s = 0; s < n; ++s) {
                    const std::size_t base = s * k * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                      const std::size_t t = labels[s * hw + i];
                      double others = 0.0;
                      for (std::size_t c = 0; c < k; ++c) {
                        if (c != t) others += probs[base + c * hw + i];
                      }
                      // dL/dp: -lambda_t beta1 e^{-p_t} on the true class,
                      // beta2 e^{s} on every other class.
                      const double wrong = params.beta2 * std::exp(others);
                      double dot = 0.0;
                      for (std::size_t c = 0; c < k; ++c) {
                        g[c] = c == t ? -lambda[t] * params.beta1 * std::exp(-probs[base + c * hw + i])
                                      : wrong;
                        dot += g[c] * probs[base + c * hw + i];
                      }
                      for (std::size_t c = 0; c < k; ++c) {
                        const std::size_t j = base + c * hw + i;
                        gz[j] += upstream * probs[j] * (g[c] - dot);
                      }
                    }
                  }
                });
  }
  return out;
}

Tensor wme_batch_loss_composed(const Tensor& logits, const LabelMask& masks,
                               const ClassWeights& weights, const WmeParams& params,
                               Reduction reduction) {
  check_loss_inputs(logits, masks, weights.num_classes());
  const std::size_t n = logits.size(0), k = logits.size(1);
  const std::size_t h = logits.size(2), w = logits.size(3), hw = h * w;

  Tensor onehot = Tensor::zeros(logits.shape());
  Tensor complement = Tensor::full(logits.shape(), 1.0);
  Tensor pixel_lambda = Tensor::zeros({n, h, w});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t t = masks.labels[s * hw + i];
      onehot.data()[(s * k + t) * hw + i] = 1.0;
      complement.data()[(s * k + t) * hw + i] = 0.0;
      pixel_lambda.data()[s * hw + i] = weights.lambda[t];
    }
  }
  Tensor probs = nn::softmax_channels(logits);
  Tensor p_true = ops::reduce(probs * onehot, {1}, ops::Reduce::sum);
  Tensor others = ops::reduce(probs * complement, {1}, ops::Reduce::sum);
  Tensor t1 = ops::exp(ops::neg(p_true)) * pixel_lambda * params.beta1;
  Tensor t2 = ops::exp(others) * params.beta2;
  Tensor total = ops::sum(t1 + t2);
  return total * reduction_scale(reduction, n * hw);
}

Tensor cross_entropy_loss(const Tensor& logits, const LabelMask& masks, Reduction reduction) {
  check_loss_inputs(logits, masks, 0);
  const std::size_t n = logits.size(0), k = logits.size(1);
  const std::size_t hw = logits.size(2) * logits.size(3);
  const double scale = reduction_scale(reduction, n * hw);
  auto z = logits.data();
  std::vector<double> probs(logits.numel());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = s * k * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      double mx = z[base + i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[base + c * hw + i]);
      double norm = 0.0;
      for (std::size_t c = 0; c < k; ++c) norm += std::exp(z[base + c * hw + i] - mx);
      const double log_norm = mx + std::log(norm);
      for (std::size_t c = 0; c < k; ++c) {
        probs[base + c * hw + i] = std::exp(z[base + c * hw + i] - log_norm);
      }
      total -= z[base + masks.labels[s * hw + i] * hw + i] - log_norm;
    }
  }
  Tensor out = Tensor::scalar(total * scale);
  Tape& tape = Tape::active();
  if (tape.should_record({&logits})) {
    tape.record("cross_entropy", {logits}, out,
                [n, k, hw, scale, probs = std::move(probs), labels = masks.labels](Node& node) {
                  Tensor& logits = node.inputs[0];
                  if (!logits.requires_grad()) return;
                  const double upstream = node.output.grad()[0] * scale;
                  auto gz = logits.grad();
                  for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t i = 0; i < hw; ++i) {
                      const std::size_t t = labels[s * hw + i];
                      for (std::size_t c = 0; c < k; ++c) {
                        const std::size_t j = (s * k + c) * hw + i;
                        gz[j] += upstream * (probs[j] - (c == t ? 1.0 : 0.0));
                      }
                    }
                  }
                });
  }
  return out;
}

std::vector<CurvePoint> loss_curve(double lambda, const WmeParams& params,
                                   std::span<const double> grid) {
  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  for (double p : grid) {
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(Errc::invalid_argument, "loss curve grid point " + std::to_string(p) +
                                              " outside (0, 1)");
    }
    const double a = lambda * params.beta1 * std::exp(-p);
    const double b = params.beta2 * std::exp(1.0 - p);
    curve.push_back({p, a + b, -a - b, a + b});
  }
  return curve;
}

std::vector<CurvePoint> loss_curve(const ClassWeights& weights, std::size_t true_class,
                                   const WmeParams& params, std::span<const double> grid) {
  if (true_class >= weights.num_classes()) throw Error(Errc::range, "class index out of range");
  return loss_curve(weights.lambda[true_class], params, grid);
}

void write_loss_curve_csv(std::ostream& os, std::span<const CurvePoint> curve) {
  os << "p,loss,dloss,d2loss\n";
  os << std::setprecision(12);
  for (const auto& pt : curve) {
    os << pt.p << ',' << pt.loss << ',' << pt.dloss << ',' << pt.d2loss << '\n';
  }
}

}  // namespace ymwml
