// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable operations on Tape-recorded values. Every op computes its output
// eagerly and records a closure that pushes the output gradient to its inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "pointshade/autograd.hpp"

namespace pointshade {

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_string(s));
}

// Range of output indices o with 0 <= o*stride - pad + k < extent.
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t out_extent,
                                                             std::ptrdiff_t in_extent,
                                                             std::ptrdiff_t stride,
                                                             std::ptrdiff_t pad,
                                                             std::ptrdiff_t k) {
  std::ptrdiff_t lo = pad - k;
  lo = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  std::ptrdiff_t hi_num = in_extent - 1 + pad - k;
  std::ptrdiff_t hi = hi_num < 0 ? -1 : hi_num / stride;
  hi = std::min(hi, out_extent - 1);
  return {lo, hi + 1};
}

}  // namespace detail

/// 2-D cross-correlation with square odd kernels and zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, int stride,
              int padding) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  detail::require_rank(xs, 4, "conv2d");
  detail::require_rank(ks, 4, "conv2d kernel");
  detail::require(ks[2] == ks[3] && ks[2] % 2 == 1,
                  "conv2d: kernel must be square with odd extent, got " + shape_string(ks));
  detail::require(ks[1] == xs[1], "conv2d: input has " + std::to_string(xs[1]) +
                                      " channels but kernel expects " + std::to_string(ks[1]));
  detail::require(bias.shape() == Shape{ks[0]},
                  "conv2d: bias shape " + shape_string(bias.shape()) + " for " +
                      std::to_string(ks[0]) + " output channels");
  detail::require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");

  const auto N = static_cast<std::ptrdiff_t>(xs[0]);
  const auto C = static_cast<std::ptrdiff_t>(xs[1]);
  const auto H = static_cast<std::ptrdiff_t>(xs[2]);
  const auto W = static_cast<std::ptrdiff_t>(xs[3]);
  const auto O = static_cast<std::ptrdiff_t>(ks[0]);
  const auto K = static_cast<std::ptrdiff_t>(ks[2]);
  detail::require(H + 2 * padding >= K && W + 2 * padding >= K,
                  "conv2d: kernel larger than padded input " + shape_string(xs));
  const std::ptrdiff_t OH = (H + 2 * padding - K) / stride + 1;
  const std::ptrdiff_t OW = (W + 2 * padding - K) / stride + 1;

  const T* x = input.value().data().data();
  const T* k = kernel.value().data().data();
  const T* b = bias.value().data().data();
  Tensor<T> out({xs[0], ks[0], std::size_t(OH), std::size_t(OW)});
  T* y = out.data().data();

  for (std::ptrdiff_t n = 0; n < N; ++n) {
    for (std::ptrdiff_t o = 0; o < O; ++o) {
      T* yp = y + (n * O + o) * OH * OW;
      std::fill(yp, yp + OH * OW, b[o]);
      for (std::ptrdiff_t c = 0; c < C; ++c) {
        const T* xp = x + (n * C + c) * H * W;
        for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
          auto [oy0, oy1] = detail::valid_range(OH, H, stride, padding, ky);
          for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
            auto [ox0, ox1] = detail::valid_range(OW, W, stride, padding, kx);
            const T wv = k[((o * C + c) * K + ky) * K + kx];
            for (std::ptrdiff_t oy = oy0; oy < oy1; ++oy) {
              const T* xrow = xp + (oy * stride - padding + ky) * W - padding + kx;
              T* yrow = yp + oy * OW;
              if (stride == 1) {
                for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox];
              } else {
                for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox * stride];
              }
            }
          }
        }
      }
    }
  }

  const std::size_t xi = input.id(), ki = kernel.id(), bi = bias.id();
  return input.tape().record(
      std::move(out), {input, kernel, bias},
      [=](Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self)->data().data();
        const T* xv = tape.value(xi).data().data();
        const T* kv = tape.value(ki).data().data();
        T* gx = tape.requires_grad(xi) ? tape.grad_buffer(xi).data().data() : nullptr;
        T* gk = tape.requires_grad(ki) ? tape.grad_buffer(ki).data().data() : nullptr;
        T* gb = tape.requires_grad(bi) ? tape.grad_buffer(bi).data().data() : nullptr;
        for (std::ptrdiff_t n = 0; n < N; ++n) {
          for (std::ptrdiff_t o = 0; o < O; ++o) {
            const T* gp = g + (n * O + o) * OH * OW;
            if (gb) {
              T acc = 0;
              for (std::ptrdiff_t i = 0; i < OH * OW; ++i) acc += gp[i];
              gb[o] += acc;
            }
            for (std::ptrdiff_t c = 0; c < C; ++c) {
              const T* xp = xv + (n * C + c) * H * W;
              T* gxp = gx ? gx + (n * C + c) * H * W : nullptr;
              for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
                auto [oy0, oy1] = detail::valid_range(OH, H, stride, padding, ky);
                for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
                  auto [ox0, ox1] = detail::valid_range(OW, W, stride, padding, kx);
                  const std::ptrdiff_t widx = ((o * C + c) * K + ky) * K + kx;
                  const T wv = kv[widx];
                  T acc = 0;
                  for (std::ptrdiff_t oy = oy0; oy < oy1; ++oy) {
                    const std::ptrdiff_t off = (oy * stride - padding + ky) * W - padding + kx;
                    const T* grow = gp + oy * OW;
                    const T* xrow = xp + off;
                    if (stride == 1) {
                      for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) acc += grow[ox] * xrow[ox];
                      if (gxp) {
                        T* gxrow = gxp + off;
                        for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox) gxrow[ox] += wv * grow[ox];
                      }
                    } else {
                      for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox)
                        acc += grow[ox] * xrow[ox * stride];
                      if (gxp) {
                        T* gxrow = gxp + off;
                        for (std::ptrdiff_t ox = ox0; ox < ox1; ++ox)
                          gxrow[ox * stride] += wv * grow[ox];
                      }
                    }
                  }
                  if (gk) gk[widx] += acc;
                }
              }
            }
          }
        }
      });
}

/// Nearest-neighbor 2x upsampling.
template <typename T>
Var<T> upsample2x(const Var<T>& input) {
  const Shape& xs = input.shape();
  detail::require_rank(xs, 4, "upsample2x");
  const std::size_t planes = xs[0] * xs[1], H = xs[2], W = xs[3];
  Tensor<T> out({xs[0], xs[1], 2 * H, 2 * W});
  const T* x = input.value().data().data();
  T* y = out.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t r = 0; r < 2 * H; ++r) {
      const T* xrow = x + (p * H + r / 2) * W;
      T* yrow = y + (p * 2 * H + r) * 2 * W;
      for (std::size_t c = 0; c < W; ++c) yrow[2 * c] = yrow[2 * c + 1] = xrow[c];
    }
  }
  const std::size_t xi = input.id();
  return input.tape().record(std::move(out), {input}, [=](Tape<T>& tape, std::size_t self) {
    const T* g = tape.grad(self)->data().data();
    T* gx = tape.grad_buffer(xi).data().data();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t r = 0; r < 2 * H; ++r) {
        const T* grow = g + (p * 2 * H + r) * 2 * W;
        T* gxrow = gx + (p * H + r / 2) * W;
        for (std::size_t c = 0; c < W; ++c) gxrow[c] += grow[2 * c] + grow[2 * c + 1];
      }
    }
  });
}

/// Affine map rows * weight^T + bias. input [N,Din], weight [Dout,Din], bias [Dout].
template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  detail::require_rank(xs, 2, "linear");
  detail::require_rank(ws, 2, "linear weight");
  detail::require(ws[1] == xs[1], "linear: input width " + std::to_string(xs[1]) +
                                      " does not match weight " + shape_string(ws));
  detail::require(bias.shape() == Shape{ws[0]},
                  "linear: bias shape " + shape_string(bias.shape()) + " for weight " +
                      shape_string(ws));
  const std::size_t N = xs[0], I = xs[1], O = ws[0];
  Tensor<T> out({N, O});
  const T* x = input.value().data().data();
  const T* w = weight.value().data().data();
  const T* b = bias.value().data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      T acc = b[o];
      const T* wr = w + o * I;
      const T* xr = x + n * I;
      for (std::size_t i = 0; i < I; ++i) acc += wr[i] * xr[i];
      out[n * O + o] = acc;
    }
  }
  const std::size_t xi = input.id(), wi = weight.id(), bi = bias.id();
  return input.tape().record(
      std::move(out), {input, weight, bias}, [=](Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self)->data().data();
        const T* xv = tape.value(xi).data().data();
        const T* wv = tape.value(wi).data().data();
        T* gx = tape.requires_grad(xi) ? tape.grad_buffer(xi).data().data() : nullptr;
        T* gw = tape.requires_grad(wi) ? tape.grad_buffer(wi).data().data() : nullptr;
        T* gb = tape.requires_grad(bi) ? tape.grad_buffer(bi).data().data() : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) {
            const T go = g[n * O + o];
            if (go == T(0)) continue;
            if (gb) gb[o] += go;
            if (gw) {
              T* gwr = gw + o * I;
              const T* xr = xv + n * I;
              for (std::size_t i = 0; i < I; ++i) gwr[i] += go * xr[i];
            }
            if (gx) {
              T* gxr = gx + n * I;
              const T* wr = wv + o * I;
              for (std::size_t i = 0; i < I; ++i) gxr[i] += go * wr[i];
            }
          }
        }
      });
}

template <typename T>
struct ChannelStats {
  Var<T> mean;  // [N,C]
  Var<T> std;   // [N,C], population standard deviation
};

/// Per-sample, per-channel spatial mean and population standard deviation.
template <typename T>
ChannelStats<T> channel_stats(const Var<T>& x) {
  const Shape& xs = x.shape();
  detail::require_rank(xs, 4, "channel_stats");
  detail::require(xs[2] * xs[3] >= 1, "channel_stats: empty spatial extent");
  const std::size_t planes = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> mean({xs[0], xs[1]});
  Tensor<T> sd({xs[0], xs[1]});
  const T* xv = x.value().data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xv + p * HW;
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += xp[i];
    const double mu = s / double(HW);
    double ss = 0.0;
    for (std::size_t i = 0; i < HW; ++i) {
      const double d = double(xp[i]) - mu;
      ss += d * d;
    }
    mean[p] = T(mu);
    sd[p] = T(std::sqrt(ss / double(HW)));
  }
  const std::size_t xi = x.id();
  Tape<T>& tape = x.tape();
  Var<T> mean_var = tape.record(mean, {x}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    T* gx = t.grad_buffer(xi).data().data();
    for (std::size_t p = 0; p < planes; ++p) {
      const T gm = g[p] / T(HW);
      T* gxp = gx + p * HW;
      for (std::size_t i = 0; i < HW; ++i) gxp[i] += gm;
    }
  });
  Var<T> sd_var = tape.record(sd, {x}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    const T* xv2 = t.value(xi).data().data();
    T* gx = t.grad_buffer(xi).data().data();
    for (std::size_t p = 0; p < planes; ++p) {
      if (sd[p] == T(0)) continue;
      const T scale = g[p] / (T(HW) * sd[p]);
      const T mu = mean[p];
      const T* xp = xv2 + p * HW;
      T* gxp = gx + p * HW;
      for (std::size_t i = 0; i < HW; ++i) gxp[i] += scale * (xp[i] - mu);
    }
  });
  return {mean_var, sd_var};
}

/// x - m broadcast over the spatial extent; m is [N,C].
template <typename T>
Var<T> channel_sub(const Var<T>& x, const Var<T>& m) {
  const Shape& xs = x.shape();
  detail::require_rank(xs, 4, "channel_sub");
  detail::require(m.shape() == Shape{xs[0], xs[1]}, "channel_sub: per-channel shape mismatch");
  const std::size_t planes = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> out = x.value();
  const T* mv = m.value().data().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < HW; ++i) out[p * HW + i] -= mv[p];
  const std::size_t xi = x.id(), mi = m.id();
  return x.tape().record(std::move(out), {x, m}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    if (t.requires_grad(xi)) {
      T* gx = t.grad_buffer(xi).data().data();
      for (std::size_t i = 0; i < planes * HW; ++i) gx[i] += g[i];
    }
    if (t.requires_grad(mi)) {
      T* gm = t.grad_buffer(mi).data().data();
      for (std::size_t p = 0; p < planes; ++p) {
        T acc = 0;
        for (std::size_t i = 0; i < HW; ++i) acc += g[p * HW + i];
        gm[p] -= acc;
      }
    }
  });
}

/// x / d broadcast over the spatial extent; d is [N,C].
template <typename T>
Var<T> channel_div(const Var<T>& x, const Var<T>& d) {
  const Shape& xs = x.shape();
  detail::require_rank(xs, 4, "channel_div");
  detail::require(d.shape() == Shape{xs[0], xs[1]}, "channel_div: per-channel shape mismatch");
  const std::size_t planes = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> out = x.value();
  const T* dv = d.value().data().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < HW; ++i) out[p * HW + i] /= dv[p];
  const std::size_t xi = x.id(), di = d.id();
  return x.tape().record(std::move(out), {x, d}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    const T* xv = t.value(xi).data().data();
    const T* dv2 = t.value(di).data().data();
    T* gx = t.requires_grad(xi) ? t.grad_buffer(xi).data().data() : nullptr;
    T* gd = t.requires_grad(di) ? t.grad_buffer(di).data().data() : nullptr;
    for (std::size_t p = 0; p < planes; ++p) {
      const T inv = T(1) / dv2[p];
      T acc = 0;
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t j = p * HW + i;
        if (gx) gx[j] += g[j] * inv;
        acc += g[j] * xv[j];
      }
      if (gd) gd[p] -= acc * inv * inv;
    }
  });
}

/// x * scale + shift with per-channel [N,C] scale and shift.
template <typename T>
Var<T> channel_scale_shift(const Var<T>& x, const Var<T>& scale, const Var<T>& shift) {
  const Shape& xs = x.shape();
  detail::require_rank(xs, 4, "channel_scale_shift");
  const Shape pc{xs[0], xs[1]};
  detail::require(scale.shape() == pc && shift.shape() == pc,
                  "channel_scale_shift: expected per-channel shape " + shape_string(pc) +
                      ", got " + shape_string(scale.shape()) + " and " +
                      shape_string(shift.shape()));
  const std::size_t planes = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> out(xs);
  const T* xv = x.value().data().data();
  const T* sv = scale.value().data().data();
  const T* bv = shift.value().data().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < HW; ++i) out[p * HW + i] = xv[p * HW + i] * sv[p] + bv[p];
  const std::size_t xi = x.id(), si = scale.id(), bi = shift.id();
  return x.tape().record(
      std::move(out), {x, scale, shift}, [=](Tape<T>& t, std::size_t self) {
        const T* g = t.grad(self)->data().data();
        const T* xv2 = t.value(xi).data().data();
        const T* sv2 = t.value(si).data().data();
        T* gx = t.requires_grad(xi) ? t.grad_buffer(xi).data().data() : nullptr;
        T* gs = t.requires_grad(si) ? t.grad_buffer(si).data().data() : nullptr;
        T* gb = t.requires_grad(bi) ? t.grad_buffer(bi).data().data() : nullptr;
        for (std::size_t p = 0; p < planes; ++p) {
          T acc_s = 0, acc_b = 0;
          for (std::size_t i = 0; i < HW; ++i) {
            const std::size_t j = p * HW + i;
            if (gx) gx[j] += g[j] * sv2[p];
            acc_s += g[j] * xv2[j];
            acc_b += g[j];
          }
          if (gs) gs[p] += acc_s;
          if (gb) gb[p] += acc_b;
        }
      });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v += s;
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    t.grad_buffer(xi) += *t.grad(self);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape " + shape_string(a.shape()) + " vs " +
                                              shape_string(b.shape()));
  Tensor<T> out = a.value();
  out += b.value();
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    if (t.requires_grad(ai)) t.grad_buffer(ai) += *t.grad(self);
    if (t.requires_grad(bi)) t.grad_buffer(bi) += *t.grad(self);
  });
}

/// Elementwise product of equally shaped tensors.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape " + shape_string(a.shape()) + " vs " +
                                              shape_string(b.shape()));
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = *t.grad(self);
    if (t.requires_grad(ai)) {
      Tensor<T>& ga = t.grad_buffer(ai);
      const Tensor<T>& bv2 = t.value(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(bi)) {
      Tensor<T>& gb = t.grad_buffer(bi);
      const Tensor<T>& av2 = t.value(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

/// Sum of all elements as a [1] tensor.
template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor<T>({1}, acc), {x}, [=](Tape<T>& t, std::size_t self) {
    const T g = (*t.grad(self))[0];
    for (auto& v : t.grad_buffer(xi).data()) v += g;
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T(0) ? v : v * slope;
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = *t.grad(self);
    const Tensor<T>& xv = t.value(xi);
    Tensor<T>& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += xv[i] > T(0) ? g[i] : g[i] * slope;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = *t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

/// Concatenate [N,Ca,H,W] and [N,Cb,H,W] along channels.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  detail::require_rank(as, 4, "concat_channels");
  detail::require_rank(bs, 4, "concat_channels");
  detail::require(as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
                  "concat_channels: shape " + shape_string(as) + " vs " + shape_string(bs));
  const std::size_t N = as[0], ca = as[1] * as[2] * as[3], cb = bs[1] * bs[2] * bs[3];
  Tensor<T> out({N, as[1] + bs[1], as[2], as[3]});
  const T* av = a.value().data().data();
  const T* bv = b.value().data().data();
  T* y = out.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy(av + n * ca, av + (n + 1) * ca, y + n * (ca + cb));
    std::copy(bv + n * cb, bv + (n + 1) * cb, y + n * (ca + cb) + ca);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    if (t.requires_grad(ai)) {
      T* ga = t.grad_buffer(ai).data().data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < ca; ++i) ga[n * ca + i] += g[n * (ca + cb) + i];
    }
    if (t.requires_grad(bi)) {
      T* gb = t.grad_buffer(bi).data().data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < cb; ++i) gb[n * cb + i] += g[n * (ca + cb) + ca + i];
    }
  });
}

/// Replicates each row of s [N,D] into D constant planes of size H x W.
template <typename T>
Var<T> broadcast_planes(const Var<T>& s, std::size_t height, std::size_t width) {
  const Shape& ss = s.shape();
  detail::require_rank(ss, 2, "broadcast_planes");
  const std::size_t planes = ss[0] * ss[1], HW = height * width;
  Tensor<T> out({ss[0], ss[1], height, width});
  const T* sv = s.value().data().data();
  for (std::size_t p = 0; p < planes; ++p)
    std::fill(out.data().begin() + p * HW, out.data().begin() + (p + 1) * HW, sv[p]);
  const std::size_t si = s.id();
  return s.tape().record(std::move(out), {s}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    T* gs = t.grad_buffer(si).data().data();
    for (std::size_t p = 0; p < planes; ++p) {
      T acc = 0;
      for (std::size_t i = 0; i < HW; ++i) acc += g[p * HW + i];
      gs[p] += acc;
    }
  });
}

/// Stacks a rank-1 tensor [C] into [rows, C].
template <typename T>
Var<T> repeat_rows(const Var<T>& v, std::size_t rows) {
  detail::require_rank(v.shape(), 1, "repeat_rows");
  const std::size_t C = v.shape()[0];
  Tensor<T> out({rows, C});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(v.value().data().begin(), v.value().data().end(), out.data().begin() + r * C);
  const std::size_t vi = v.id();
  return v.tape().record(std::move(out), {v}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad(self)->data().data();
    T* gv = t.grad_buffer(vi).data().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) gv[c] += g[r * C + c];
  });
}

/// (x - mean) / (std + eps) per sample and channel.
template <typename T>
Var<T> instance_normalize(const Var<T>& x, T eps) {
  ChannelStats<T> st = channel_stats(x);
  return channel_div(channel_sub(x, st.mean), add_scalar(st.std, eps));
}

}  // namespace pointshade
