#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ymwml/tensor.hpp"

// Central finite-difference verification of recorded backward rules.
namespace ymwml::gradcheck {

struct Case {
  std::string name;
  /// Leaves the check differentiates with respect to (requires_grad set).
  std::vector<Tensor> inputs;
  /// Any-shape output; the check contracts it with a fixed random tensor.
  std::function<Tensor(const std::vector<Tensor>&)> fn;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t coords_per_input = 0;
};

struct Options {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

struct Result {
  std::string name;
  double worst = 0.0;  // max |analytic - numeric| / max(1, |analytic|)
  std::size_t probes = 0;
  bool passed = false;
};

Result check(const Case& c, const Options& options = {});

/// One case per registered primitive and layer, on seeded inputs no larger
/// than [2, 3, 4, 4].
std::vector<Case> op_cases(std::uint64_t seed = 7);
/// Fused, composed and cross-entropy losses in both reductions.
std::vector<Case> loss_cases(std::uint64_t seed = 11);
/// Full model at width 0.125, input 32, with non-trivial norm/attention
/// parameters; probes a sample of coordinates of every parameter tensor.
Case model_case(std::uint64_t seed = 13, std::size_t coords_per_input = 3);

/// Second-difference checks of the loss along the softmax line for
/// lambda in {e^-1, 0.8, 1}: positivity on a 99-point grid and agreement
/// with the analytic curvature. `worst` is the largest absolute deviation.
std::vector<Result> curvature_checks(double tolerance = 1e-8);

}  // namespace ymwml::gradcheck
