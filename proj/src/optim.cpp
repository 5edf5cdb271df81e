#include "ymwml/optim.hpp"

#include <cmath>
#include <string>

namespace ymwml {

double poly_lr(std::size_t iter, const PolySchedule& schedule) {
  if (schedule.max_iter == 0) throw Error(Errc::invalid_argument, "poly schedule needs max_iter > 0");
  if (iter > schedule.max_iter) {
    throw Error(Errc::invalid_argument, "iteration " + std::to_string(iter) + " beyond max_iter " +
                                            std::to_string(schedule.max_iter));
  }
  const double frac = 1.0 - double(iter) / double(schedule.max_iter);
  return schedule.lr0 * std::pow(frac, schedule.power);
}

Adam::Adam(ParameterStore& store, AdamOptions options) : store_(&store), options_(options) {
  for (const auto& [name, t] : store) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  if (!(lr >= 0.0)) throw Error(Errc::invalid_argument, "learning rate must be non-negative");
  if (m_.size() != store_->size()) {
    throw Error(Errc::shape_mismatch, "parameter store changed since the optimizer was created");
  }
  // Validate everything before touching any state so a bad gradient leaves
  // the model and moments intact.
  for (const auto& [name, t] : *store_) {
    if (!t.requires_grad() || !t.has_grad()) {
      throw Error(Errc::missing_gradient, "parameter " + name + " has no gradient");
    }
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw Error(Errc::non_finite, "non-finite gradient for " + name);
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  std::size_t idx = 0;
  for (auto& [name, t] : *store_) {
    auto w = t.data();
    auto g = t.grad();
    auto& m = m_[idx];
    auto& v = v_[idx];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double grad = g[i] + options_.weight_decay * w[i];
      m[i] = b1 * m[i] + (1.0 - b1) * grad;
      v[i] = b2 * v[i] + (1.0 - b2) * grad * grad;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
    t.zero_grad();
    ++idx;
  }
}

}  // namespace ymwml
