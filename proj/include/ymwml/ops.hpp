#pragma once

#include <string_view>
#include <vector>

#include "ymwml/tape.hpp"
#include "ymwml/tensor.hpp"

// Differentiable tensor primitives. Every function records a node on the
// active tape when an input requires grad.
namespace ymwml::ops {

enum class Binary { add, sub, mul, div };
enum class Reduce { sum, mean, max };

/// Elementwise binary op. `b` must have the shape of `a` or hold a single
/// element, which is then broadcast.
Tensor ew(Binary kind, const Tensor& a, const Tensor& b);
Tensor ew(Binary kind, const Tensor& a, double b);

inline Tensor add(const Tensor& a, const Tensor& b) { return ew(Binary::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return ew(Binary::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return ew(Binary::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return ew(Binary::div, a, b); }
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// Reduces over `axes` (empty = all axes). Reduced axes are dropped; a full
/// reduction yields shape [1]. Max routes its gradient to the first maximal
/// element.
Tensor reduce(const Tensor& a, std::vector<std::size_t> axes, Reduce mode);
inline Tensor sum(const Tensor& a) { return reduce(a, {}, Reduce::sum); }
inline Tensor mean(const Tensor& a) { return reduce(a, {}, Reduce::mean); }

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// Batched matrix product: a [B, M, K] x b [B, K, N] -> [B, M, N], with
/// optional transposition of either operand's last two axes.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

/// Softmax over the last axis.
Tensor softmax_last(const Tensor& a);

/// Throws Errc::non_finite naming `op` if `t` holds NaN or Inf.
void check_finite(std::string_view op, const Tensor& t);

}  // namespace ymwml::ops

namespace ymwml {

inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return ops::div(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return ops::ew(ops::Binary::mul, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return ops::ew(ops::Binary::add, a, b); }

}  // namespace ymwml
