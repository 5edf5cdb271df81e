#pragma once

#include <cstddef>
#include <vector>

#include "ymwml/parameters.hpp"

namespace ymwml {

/// lr(iter) = lr0 * (1 - iter / max_iter)^power
struct PolySchedule {
  double lr0 = 0.01;
  double power = 0.9;
  std::size_t max_iter = 1;
};

double poly_lr(std::size_t iter, const PolySchedule& schedule);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2: added to the gradient before the moment updates.
  double weight_decay = 1e-4;
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamOptions options = {});

  /// One update of every parameter in registration order, then zeroes the
  /// gradients.
  void step(double lr);

  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }
  const AdamOptions& options() const { return options_; }

 private:
  ParameterStore* store_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace ymwml
