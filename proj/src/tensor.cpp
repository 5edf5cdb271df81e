#include "ymwml/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace ymwml {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw Error(Errc::invalid_shape, "empty shape");
  for (auto d : shape) {
    if (d == 0) throw Error(Errc::invalid_shape, "zero dimension in shape " + shape_str(shape));
  }
}

Tensor Tensor::full(const Shape& shape, double value) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(ymwml::numel(shape), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  check_shape(shape);
  if (values.size() != ymwml::numel(shape)) {
    throw Error(Errc::invalid_shape, "value count " + std::to_string(values.size()) +
                                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng) {
  Tensor t = full(shape, 0.0);
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); i += 2) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    d[i] = r * std::cos(theta);
    if (i + 1 < d.size()) d[i + 1] = r * std::sin(theta);
  }
  return t;
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t = full(shape, 0.0);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(Errc::non_scalar_loss, "item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
  return *this;
}

std::span<double> Tensor::grad() {
  if (!impl_->requires_grad) throw Error(Errc::missing_gradient, "tensor does not require grad");
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!impl_->requires_grad) throw Error(Errc::missing_gradient, "tensor does not require grad");
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::is_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::clone() const {
  return Tensor::from(impl_->shape, impl_->data);
}

}  // namespace ymwml
