#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "ymwml/nn.hpp"

namespace ymwml::nn {

namespace {

void require_4d(std::string_view op, const Tensor& x) {
  if (x.dim() != 4) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": expected [N,C,H,W], got " +
                                          shape_str(x.shape()));
  }
}

struct ConvGeometry {
  std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels_out() const { return h_out * w_out; }
  bool direct() const { return k == 1 && stride == 1; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t hw = g.pixels_out();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * hw;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = long(oy * g.stride + ky) - long(g.pad);
          double* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= long(g.h)) {
            std::fill_n(dst, g.w_out, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + std::size_t(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = long(ox * g.stride + kx) - long(g.pad);
            dst[ox] = (ix < 0 || ix >= long(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t hw = g.pixels_out();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * hw;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = long(oy * g.stride + ky) - long(g.pad);
          if (iy < 0 || iy >= long(g.h)) continue;
          double* dst = dx + (c * g.h + std::size_t(iy)) * g.w;
          const double* src = row + oy * g.w_out;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = long(ox * g.stride + kx) - long(g.pad);
            if (ix >= 0 && ix < long(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t default_groups(std::size_t channels) {
  for (std::size_t g = std::min<std::size_t>(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  require_4d("conv2d", x);
  const std::size_t n = x.size(0);
  ConvGeometry g{};
  g.c_in = x.size(1);
  g.h = x.size(2);
  g.w = x.size(3);
  g.k = p.kernel();
  g.stride = p.stride;
  g.pad = p.padding();
  if (p.in_channels() != g.c_in) {
    throw Error(Errc::shape_mismatch, "conv2d: weight expects " + std::to_string(p.in_channels()) +
                                          " input channels, got " + std::to_string(g.c_in));
  }
  if (p.stride != 1 && p.stride != 2) throw Error(Errc::invalid_argument, "conv2d: stride must be 1 or 2");
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw Error(Errc::invalid_shape, "conv2d: input " + shape_str(x.shape()) +
                                         " smaller than kernel after padding");
  }
  g.h_out = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.w_out = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  const std::size_t c_out = p.out_channels();
  const std::size_t hw = g.pixels_out();
  const std::size_t in_plane = g.c_in * g.h * g.w;

  Tensor out = Tensor::zeros({n, c_out, g.h_out, g.w_out});
  {
    std::vector<double> cols(g.direct() ? 0 : g.patch() * hw);
    const double* wp = p.weight.data().data();
    const double* bp = p.bias.data().data();
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = x.data().data() + s * in_plane;
      double* os = out.data().data() + s * c_out * hw;
      for (std::size_t c = 0; c < c_out; ++c) std::fill_n(os + c * hw, hw, bp[c]);
      const double* src = xs;
      if (!g.direct()) {
        im2col(xs, g, cols.data());
        src = cols.data();
      }
      detail::gemm_acc(false, false, long(c_out), long(hw), long(g.patch()), wp, src, os);
    }
  }

  Tape& tape = Tape::active();
  if (tape.should_record({&x, &p.weight, &p.bias})) {
    tape.record("conv2d", {x, p.weight, p.bias}, out, [g, n, c_out](Node& node) {
      Tensor& x = node.inputs[0];
      Tensor& weight = node.inputs[1];
      Tensor& bias = node.inputs[2];
      const std::size_t hw = g.pixels_out();
      const std::size_t in_plane = g.c_in * g.h * g.w;
      const double* go = node.output.grad().data();
      std::vector<double> cols(g.direct() ? 0 : g.patch() * hw);
      std::vector<double> dcols(g.direct() ? 0 : g.patch() * hw);
      for (std::size_t s = 0; s < n; ++s) {
        const double* gs = go + s * c_out * hw;
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t c = 0; c < c_out; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += gs[c * hw + i];
            gb[c] += acc;
          }
        }
        if (weight.requires_grad()) {
          const double* src = x.data().data() + s * in_plane;
          if (!g.direct()) {
            im2col(src, g, cols.data());
            src = cols.data();
          }
          detail::gemm_acc(false, true, long(c_out), long(g.patch()), long(hw), gs, src,
                           weight.grad().data());
        }
        if (x.requires_grad()) {
          double* gx = x.grad().data() + s * in_plane;
          if (g.direct()) {
            detail::gemm_acc(true, false, long(g.c_in), long(hw), long(c_out),
                             weight.data().data(), gs, gx);
          } else {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            detail::gemm_acc(true, false, long(g.patch()), long(hw), long(c_out),
                             weight.data().data(), gs, dcols.data());
            col2im_add(dcols.data(), g, gx);
          }
        }
      }
    });
  }
  return out;
}

Tensor group_norm(const Tensor& x, const GroupNormParams& p) {
  require_4d("group_norm", x);
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  const std::size_t groups = p.groups;
  if (groups == 0 || c % groups != 0) {
    throw Error(Errc::invalid_shape, "group_norm: " + std::to_string(c) +
                                         " channels not divisible into " +
                                         std::to_string(groups) + " groups");
  }
  if (p.gamma.numel() != c || p.beta.numel() != c) {
    throw Error(Errc::shape_mismatch, "group_norm: affine parameters do not match channel count");
  }
  const std::size_t cpg = c / groups;
  const std::size_t group_size = cpg * hw;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(n * groups);
  auto xd = x.data();
  auto od = out.data();
  auto gamma = p.gamma.data();
  auto beta = p.beta.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t base = (s * c + grp * cpg) * hw;
      double mean = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) mean += xd[base + i];
      mean /= double(group_size);
      double var = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) {
        const double d = xd[base + i] - mean;
        var += d * d;
      }
      var /= double(group_size);
      const double is = 1.0 / std::sqrt(var + p.eps);
      inv_std[s * groups + grp] = is;
      for (std::size_t i = 0; i < group_size; ++i) {
        const std::size_t ch = grp * cpg + i / hw;
        const double v = (xd[base + i] - mean) * is;
        xhat[base + i] = v;
        od[base + i] = gamma[ch] * v + beta[ch];
      }
    }
  }

  Tape& tape = Tape::active();
  if (tape.should_record({&x, &p.gamma, &p.beta})) {
    tape.record("group_norm", {x, p.gamma, p.beta}, out,
                [n, c, hw, groups, cpg, group_size, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Node& node) {
                  Tensor& x = node.inputs[0];
                  Tensor& gamma_t = node.inputs[1];
                  Tensor& beta_t = node.inputs[2];
                  auto go = node.output.grad();
                  auto gamma = gamma_t.data();
                  if (gamma_t.requires_grad() || beta_t.requires_grad()) {
                    for (std::size_t s = 0; s < n; ++s) {
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (s * c + ch) * hw;
                        double dg = 0.0, db = 0.0;
                        for (std::size_t i = 0; i < hw; ++i) {
                          dg += go[base + i] * xhat[base + i];
                          db += go[base + i];
                        }
                        if (gamma_t.requires_grad()) gamma_t.grad()[ch] += dg;
                        if (beta_t.requires_grad()) beta_t.grad()[ch] += db;
                      }
                    }
                  }
                  if (!x.requires_grad()) return;
                  auto gx = x.grad();
                  const double m = double(group_size);
                  for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t grp = 0; grp < groups; ++grp) {
                      const std::size_t base = (s * c + grp * cpg) * hw;
                      double sum_d = 0.0, sum_dx = 0.0;
                      for (std::size_t i = 0; i < group_size; ++i) {
                        const double d = go[base + i] * gamma[grp * cpg + i / hw];
                        sum_d += d;
                        sum_dx += d * xhat[base + i];
                      }
                      const double is = inv_std[s * groups + grp];
                      for (std::size_t i = 0; i < group_size; ++i) {
                        const double d = go[base + i] * gamma[grp * cpg + i / hw];
                        gx[base + i] += is * (d - sum_d / m - xhat[base + i] * sum_dx / m);
                      }
                    }
                  }
                });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("relu", {x}, out, [](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto xd = x.data();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (xd[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    // Split on sign so exp never overflows.
    od[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("sigmoid", {x}, out, [](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto y = node.output.data();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel) {
  require_4d("max_pool2d", x);
  if (kernel % 2 == 0) throw Error(Errc::invalid_argument, "max_pool2d: kernel must be odd");
  const std::size_t planes = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  const long pad = long(kernel / 2);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<std::size_t> argmax(x.numel());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const std::size_t base = pl * h * w;
    for (long oy = 0; oy < long(h); ++oy) {
      for (long ox = 0; ox < long(w); ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (long iy = std::max(0L, oy - pad); iy <= std::min(long(h) - 1, oy + pad); ++iy) {
          for (long ix = std::max(0L, ox - pad); ix <= std::min(long(w) - 1, ox + pad); ++ix) {
            const std::size_t idx = base + std::size_t(iy) * w + std::size_t(ix);
            if (xd[idx] > best) {
              best = xd[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = base + std::size_t(oy) * w + std::size_t(ox);
        od[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("max_pool2d", {x}, out, [argmax = std::move(argmax)](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[argmax[i]] += go[i];
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  require_4d("upsample_nearest", x);
  if (factor == 0) throw Error(Errc::invalid_argument, "upsample_nearest: factor must be positive");
  const std::size_t planes = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t ho = h * factor, wo = w * factor;
  Tensor out = Tensor::zeros({x.size(0), x.size(1), ho, wo});
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t y = 0; y < ho; ++y) {
      const double* src = xd.data() + pl * h * w + (y / factor) * w;
      double* dst = od.data() + pl * ho * wo + y * wo;
      for (std::size_t xo = 0; xo < wo; ++xo) dst[xo] = src[xo / factor];
    }
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("upsample_nearest", {x}, out, [planes, h, w, factor](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto gx = x.grad();
      const std::size_t ho = h * factor, wo = w * factor;
      for (std::size_t pl = 0; pl < planes; ++pl) {
        for (std::size_t y = 0; y < ho; ++y) {
          double* dst = gx.data() + pl * h * w + (y / factor) * w;
          const double* src = go.data() + pl * ho * wo + y * wo;
          for (std::size_t xo = 0; xo < wo; ++xo) dst[xo / factor] += src[xo];
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_4d("global_avg_pool", x);
  const std::size_t planes = x.size(0) * x.size(1), hw = x.size(2) * x.size(3);
  Tensor out = Tensor::zeros({x.size(0), x.size(1), 1, 1});
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += xd[pl * hw + i];
    od[pl] = acc / double(hw);
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("global_avg_pool", {x}, out, [planes, hw](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto gx = x.grad();
      for (std::size_t pl = 0; pl < planes; ++pl) {
        const double g = go[pl] / double(hw);
        for (std::size_t i = 0; i < hw; ++i) gx[pl * hw + i] += g;
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
  require_4d("scale_channels", x);
  if (gate.numel() != x.size(0) * x.size(1)) {
    throw Error(Errc::shape_mismatch, "scale_channels: gate " + shape_str(gate.shape()) +
                                          " does not match " + shape_str(x.shape()));
  }
  const std::size_t planes = x.size(0) * x.size(1), hw = x.size(2) * x.size(3);
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto gd = gate.data();
  auto od = out.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t i = 0; i < hw; ++i) od[pl * hw + i] = xd[pl * hw + i] * gd[pl];
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x, &gate})) {
    tape.record("scale_channels", {x, gate}, out, [planes, hw](Node& node) {
      Tensor& x = node.inputs[0];
      Tensor& gate = node.inputs[1];
      auto go = node.output.grad();
      auto xd = x.data();
      auto gd = gate.data();
      for (std::size_t pl = 0; pl < planes; ++pl) {
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (std::size_t i = 0; i < hw; ++i) gx[pl * hw + i] += go[pl * hw + i] * gd[pl];
        }
        if (gate.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += go[pl * hw + i] * xd[pl * hw + i];
          gate.grad()[pl] += acc;
        }
      }
    });
  }
  return out;
}

Tensor softmax_channels(const Tensor& x) {
  require_4d("softmax_channels", x);
  const std::size_t n = x.size(0), k = x.size(1), hw = x.size(2) * x.size(3);
  Tensor out = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = s * k * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      double mx = xd[base + i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, xd[base + c * hw + i]);
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double e = std::exp(xd[base + c * hw + i] - mx);
        od[base + c * hw + i] = e;
        total += e;
      }
      for (std::size_t c = 0; c < k; ++c) od[base + c * hw + i] /= total;
    }
  }
  Tape& tape = Tape::active();
  if (tape.should_record({&x})) {
    tape.record("softmax_channels", {x}, out, [n, k, hw](Node& node) {
      Tensor& x = node.inputs[0];
      if (!x.requires_grad()) return;
      auto go = node.output.grad();
      auto y = node.output.data();
      auto gx = x.grad();
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t base = s * k * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          double dot = 0.0;
          for (std::size_t c = 0; c < k; ++c) dot += go[base + c * hw + i] * y[base + c * hw + i];
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t j = base + c * hw + i;
            gx[j] += y[j] * (go[j] - dot);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace ymwml::nn
