#include "ymwml/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"

namespace ymwml::ops {

namespace {

constexpr double kExpOverflow = 700.0;

Tensor empty_like_shape(const Shape& shape) { return Tensor::zeros(shape); }

std::string_view binary_name(Binary kind) {
  switch (kind) {
    case Binary::add: return "add";
    case Binary::sub: return "sub";
    case Binary::mul: return "mul";
    case Binary::div: return "div";
  }
  return "?";
}

// Strides of a row-major shape.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace

void check_finite(std::string_view op, const Tensor& t) {
  if (!t.is_finite()) {
    throw Error(Errc::non_finite, "non-finite value produced by operator '" + std::string(op) + "'");
  }
}

Tensor ew(Binary kind, const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1 && a.shape() != b.shape();
  if (!scalar_b && a.shape() != b.shape()) {
    throw Error(Errc::shape_mismatch, std::string(binary_name(kind)) + ": shapes " +
                                          shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.numel();
  Tensor out = empty_like_shape(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  auto bv = [&](std::size_t i) { return scalar_b ? y[0] : y[i]; };
  switch (kind) {
    case Binary::add:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + bv(i);
      break;
    case Binary::sub:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - bv(i);
      break;
    case Binary::mul:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * bv(i);
      break;
    case Binary::div:
      for (std::size_t i = 0; i < n; ++i) {
        if (bv(i) == 0.0) throw Error(Errc::non_finite, "div: division by exact zero");
        o[i] = x[i] / bv(i);
      }
      break;
  }
  check_finite(binary_name(kind), out);

  Tape& tape = Tape::active();
  if (tape.should_record({&a, &b})) {
    tape.record(std::string(binary_name(kind)), {a, b}, out, [kind, scalar_b](Node& node) {
      Tensor& a = node.inputs[0];
      Tensor& b = node.inputs[1];
      auto go = node.output.grad();
      auto x = a.data();
      auto y = b.data();
      const std::size_t n = go.size();
      auto yb = [&](std::size_t i) { return scalar_b ? y[0] : y[i]; };
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) {
          switch (kind) {
            case Binary::add:
            case Binary::sub: ga[i] += go[i]; break;
            case Binary::mul: ga[i] += go[i] * yb(i); break;
            case Binary::div: ga[i] += go[i] / yb(i); break;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double g = 0.0;
          switch (kind) {
            case Binary::add: g = go[i]; break;
            case Binary::sub: g = -go[i]; break;
            case Binary::mul: g = go[i] * x[i]; break;
            case Binary::div: g = -go[i] * x[i] / (yb(i) * yb(i)); break;
          }
          gb[scalar_b ? 0 : i] += g;
        }
      }
    });
  }
  return out;
}

Tensor ew(Binary kind, const Tensor& a, double b) {
  return ew(kind, a, Tensor::scalar(b));
}

Tensor neg(const Tensor& a) { return ew(Binary::mul, a, -1.0); }

Tensor exp(const Tensor& a) {
  Tensor out = empty_like_shape(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] <= kExpOverflow)) {
      throw Error(Errc::non_finite, "exp: input " + std::to_string(x[i]) + " overflows");
    }
    o[i] = std::exp(x[i]);
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    tape.record("exp", {a}, out, [](Node& node) {
      Tensor& a = node.inputs[0];
      if (!a.requires_grad()) return;
      auto go = node.output.grad();
      auto y = node.output.data();
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    });
  }
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = empty_like_shape(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw Error(Errc::non_finite, "log: non-positive input");
    o[i] = std::log(x[i]);
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    tape.record("log", {a}, out, [](Node& node) {
      Tensor& a = node.inputs[0];
      if (!a.requires_grad()) return;
      auto go = node.output.grad();
      auto x = a.data();
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / x[i];
    });
  }
  return out;
}

Tensor reduce(const Tensor& a, std::vector<std::size_t> axes, Reduce mode) {
  const Shape& in_shape = a.shape();
  const std::size_t nd = in_shape.size();
  if (axes.empty()) {
    for (std::size_t i = 0; i < nd; ++i) axes.push_back(i);
  }
  std::vector<bool> reduced(nd, false);
  for (auto ax : axes) {
    if (ax >= nd) {
      throw Error(Errc::axis_out_of_range, "reduce: axis " + std::to_string(ax) +
                                               " out of range for shape " + shape_str(in_shape));
    }
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < nd; ++i) {
    if (!reduced[i]) out_shape.push_back(in_shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Map each input element to its output slot.
  const std::size_t n = a.numel();
  std::vector<std::size_t> target(n);
  {
    const auto in_strides = strides_of(in_shape);
    std::vector<std::size_t> out_strides(nd, 0);
    std::size_t stride = 1;
    for (std::size_t i = nd; i-- > 0;) {
      if (!reduced[i]) {
        out_strides[i] = stride;
        stride *= in_shape[i];
      }
    }
    for (std::size_t lin = 0; lin < n; ++lin) {
      std::size_t rem = lin, t = 0;
      for (std::size_t d = 0; d < nd; ++d) {
        const std::size_t idx = rem / in_strides[d];
        rem %= in_strides[d];
        t += idx * out_strides[d];
      }
      target[lin] = t;
    }
  }
  const std::size_t out_n = numel(out_shape);
  const double count = static_cast<double>(n / out_n);

  Tensor out = Tensor::zeros(out_shape);
  auto o = out.data();
  auto x = a.data();
  std::vector<std::size_t> argmax;
  if (mode == Reduce::max) {
    std::fill(o.begin(), o.end(), -std::numeric_limits<double>::infinity());
    argmax.assign(out_n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] > o[target[i]]) {  // strict: the first maximal index wins
        o[target[i]] = x[i];
        argmax[target[i]] = i;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) o[target[i]] += x[i];
    if (mode == Reduce::mean) {
      for (auto& v : o) v /= count;
    }
  }

  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    const char* name = mode == Reduce::sum ? "sum" : mode == Reduce::mean ? "mean" : "max";
    tape.record(name, {a}, out,
                [mode, count, target = std::move(target), argmax = std::move(argmax)](Node& node) {
                  Tensor& a = node.inputs[0];
                  if (!a.requires_grad()) return;
                  auto go = node.output.grad();
                  auto ga = a.grad();
                  if (mode == Reduce::max) {
                    for (std::size_t j = 0; j < argmax.size(); ++j) ga[argmax[j]] += go[j];
                  } else {
                    const double scale = mode == Reduce::mean ? 1.0 / count : 1.0;
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[target[i]] * scale;
                  }
                });
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  check_shape(shape);
  if (numel(shape) != a.numel()) {
    throw Error(Errc::invalid_shape, "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                         shape_str(shape));
  }
  Tensor out = Tensor::from(shape, std::vector<double>(a.data().begin(), a.data().end()));
  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    tape.record("reshape", {a}, out, [](Node& node) {
      Tensor& a = node.inputs[0];
      if (!a.requires_grad()) return;
      auto go = node.output.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(Errc::invalid_argument, "concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw Error(Errc::axis_out_of_range, "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw Error(Errc::shape_mismatch, "concat: " + shape_str(s) + " incompatible with " +
                                            shape_str(first) + " along axis " +
                                            std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Tensor out = Tensor::zeros(out_shape);
  auto o = out.data();
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t row = p.shape()[axis] * inner;
    auto x = p.data();
    for (std::size_t r = 0; r < outer; ++r) {
      std::copy_n(x.begin() + r * row, row, o.begin() + r * out_row + offset);
    }
    offset += row;
  }

  Tape& tape = Tape::active();
  if (tape.should_record(parts)) {
    tape.record("concat", parts, out, [outer, out_row, offsets](Node& node) {
      auto go = node.output.grad();
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Tensor& p = node.inputs[k];
        if (!p.requires_grad()) continue;
        auto gp = p.grad();
        const std::size_t row = gp.size() / outer;
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t j = 0; j < row; ++j) gp[r * row + j] += go[r * out_row + offsets[k] + j];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw Error(Errc::axis_out_of_range, "slice: axis out of range");
  if (length == 0 || start + length > s[axis]) {
    throw Error(Errc::invalid_shape, "slice: range [" + std::to_string(start) + ", " +
                                         std::to_string(start + length) + ") exceeds axis size " +
                                         std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out = Tensor::zeros(out_shape);
  auto o = out.data();
  auto x = a.data();
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = length * inner;
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(x.begin() + r * in_row + start * inner, out_row, o.begin() + r * out_row);
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    tape.record("slice", {a}, out, [outer, in_row, out_row, offset = start * inner](Node& node) {
      Tensor& a = node.inputs[0];
      if (!a.requires_grad()) return;
      auto go = node.output.grad();
      auto ga = a.grad();
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < out_row; ++j) ga[r * in_row + offset + j] += go[r * out_row + j];
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if (a.dim() != 3 || b.dim() != 3 || a.size(0) != b.size(0)) {
    throw Error(Errc::shape_mismatch, "bmm: operands " + shape_str(a.shape()) + " and " +
                                          shape_str(b.shape()));
  }
  const std::size_t batch = a.size(0);
  const std::size_t m = transpose_a ? a.size(2) : a.size(1);
  const std::size_t k = transpose_a ? a.size(1) : a.size(2);
  const std::size_t kb = transpose_b ? b.size(2) : b.size(1);
  const std::size_t n = transpose_b ? b.size(1) : b.size(2);
  if (k != kb) {
    throw Error(Errc::shape_mismatch, "bmm: inner dimensions differ for " + shape_str(a.shape()) +
                                          " and " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({batch, m, n});
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < batch; ++i) {
      detail::gemm_acc(transpose_a, transpose_b, long(m), long(n), long(k), pa + i * m * k,
                       pb + i * k * n, po + i * m * n);
    }
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&a, &b})) {
    tape.record("bmm", {a, b}, out, [=](Node& node) {
      Tensor& a = node.inputs[0];
      Tensor& b = node.inputs[1];
      const double* go = node.output.grad().data();
      for (std::size_t i = 0; i < batch; ++i) {
        const double* gi = go + i * m * n;
        if (a.requires_grad()) {
          // dA = dC * op(B)^T, stored in A's layout.
          double* ga = a.grad().data() + i * m * k;
          const double* pb = b.data().data() + i * k * n;
          if (!transpose_a) {
            detail::gemm_acc(false, !transpose_b, long(m), long(k), long(n), gi, pb, ga);
          } else {
            detail::gemm_acc(transpose_b, true, long(k), long(m), long(n), pb, gi, ga);
          }
        }
        if (b.requires_grad()) {
          // dB = op(A)^T * dC, stored in B's layout.
          double* gb = b.grad().data() + i * k * n;
          const double* pa = a.data().data() + i * m * k;
          if (!transpose_b) {
            detail::gemm_acc(!transpose_a, false, long(k), long(n), long(m), pa, gi, gb);
          } else {
            detail::gemm_acc(true, transpose_a, long(n), long(k), long(m), gi, pa, gb);
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_last(const Tensor& a) {
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  Tensor out = Tensor::zeros(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* orow = o.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      orow[c] = std::exp(xr[c] - mx);
      total += orow[c];
    }
    for (std::size_t c = 0; c < cols; ++c) orow[c] /= total;
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&a})) {
    tape.record("softmax_last", {a}, out, [rows, cols](Node& node) {
      Tensor& a = node.inputs[0];
      if (!a.requires_grad()) return;
      auto go = node.output.grad();
      auto y = node.output.data();
      auto ga = a.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += go[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += y[r * cols + c] * (go[r * cols + c] - dot);
        }
      }
    });
  }
  return out;
}

}  // namespace ymwml::ops
