#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "ymwml/tensor.hpp"

namespace ymwml {

/// Per-pixel class indices, batch-major: [batch, height, width].
struct LabelMask {
  std::size_t batch = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  static LabelMask single(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);
  std::size_t pixels() const { return labels.size(); }
  /// Throws Errc::range if any label is >= num_classes.
  void check_range(std::size_t num_classes) const;
};

struct WmeParams {
  double beta1 = 2.0;
  double beta2 = 1.0;
};

/// Class rates cr (fraction of labelled pixels per class) and the derived
/// weights lambda = exp(-cr).
struct ClassWeights {
  std::vector<double> cr;
  std::vector<double> lambda;

  static ClassWeights from_rates(std::vector<double> cr);
  /// lambda = 1 for every class (the unweighted ablation).
  static ClassWeights uniform(std::size_t num_classes);
  std::size_t num_classes() const { return lambda.size(); }
};

ClassWeights compute_class_rates(std::span<const LabelMask> masks, std::size_t num_classes);

enum class Reduction { sum, mean };

struct WmePixelTerms {
  double loss;
  double t1;  // lambda_i * beta1 * exp(-p_i)
  double t2;  // beta2 * exp(sum_{j != i} p_j)
};

WmePixelTerms wme_pixel_loss(std::span<const double> probs, std::size_t true_class,
                             const ClassWeights& weights, const WmeParams& params = {});

/// Softmax over channels followed by the per-pixel WME loss, summed over
/// N, H, W (or averaged for Reduction::mean). Backward is analytic.
Tensor wme_batch_loss(const Tensor& logits, const LabelMask& masks, const ClassWeights& weights,
                      const WmeParams& params = {}, Reduction reduction = Reduction::sum);

/// Same value built from primitive tape ops (softmax, mul, exp, sum). Slower;
/// kept as an independent route for cross-checking the fused op.
Tensor wme_batch_loss_composed(const Tensor& logits, const LabelMask& masks,
                               const ClassWeights& weights, const WmeParams& params = {},
                               Reduction reduction = Reduction::sum);

/// -sum log p_true via a stable log-softmax.
Tensor cross_entropy_loss(const Tensor& logits, const LabelMask& masks,
                          Reduction reduction = Reduction::sum);

struct CurvePoint {
  double p;
  double loss;
  double dloss;
  double d2loss;
};

/// L(p) = lambda * beta1 * e^-p + beta2 * e^(1 - p) along the softmax line
/// s = 1 - p, with analytic first and second derivatives.
std::vector<CurvePoint> loss_curve(double lambda, const WmeParams& params,
                                   std::span<const double> grid);
std::vector<CurvePoint> loss_curve(const ClassWeights& weights, std::size_t true_class,
                                   const WmeParams& params, std::span<const double> grid);

/// "p,loss,dloss,d2loss" header, 12 significant digits.
void write_loss_curve_csv(std::ostream& os, std::span<const CurvePoint> curve);

}  // namespace ymwml
