#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ymwml/error.hpp"
#include "ymwml/rng.hpp"

namespace ymwml {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
void check_shape(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // 0 for leaves; otherwise the tape generation whose node produced it.
  std::uint64_t generation = 0;
};

/// Dense row-major array of doubles. Copies share storage (handle
/// semantics), which is what lets tape nodes and parameter stores refer to
/// the same buffers; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor full(const Shape& shape, double value);
  static Tensor zeros(const Shape& shape) { return full(shape, 0.0); }
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value) { return full({1}, value); }
  /// Standard normal entries via Box-Muller. Uniforms are consumed in pairs
  /// (u1, u2); each pair yields r*cos(t) then r*sin(t) with
  /// r = sqrt(-2 ln(1 - u1)), t = 2*pi*u2. An odd tail drops the sine value.
  static Tensor randn(const Shape& shape, Rng& rng);
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  /// Marks a leaf as trainable and allocates its gradient buffer.
  Tensor& set_requires_grad(bool on);
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  bool is_leaf() const { return impl_->generation == 0; }
  std::uint64_t generation() const { return impl_->generation; }

  /// False if any element is NaN or infinite.
  bool is_finite() const;

  Tensor clone() const;
  Tensor detach() const { return clone(); }

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace ymwml
