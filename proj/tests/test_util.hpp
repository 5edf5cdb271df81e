#pragma once

#include <functional>
#include <vector>

#include "ymwml/tape.hpp"
#include "ymwml/tensor.hpp"

namespace testutil {

// Central difference of a scalar function of one coordinate of `x`.
inline double numeric_partial(ymwml::Tensor& x, std::size_t i, double h,
                              const std::function<double()>& f) {
  ymwml::NoGradGuard guard;
  auto d = x.data();
  const double saved = d[i];
  d[i] = saved + h;
  const double up = f();
  d[i] = saved - h;
  const double down = f();
  d[i] = saved;
  return (up - down) / (2 * h);
}

inline std::vector<double> values(const ymwml::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

inline std::vector<double> grads(const ymwml::Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace testutil
