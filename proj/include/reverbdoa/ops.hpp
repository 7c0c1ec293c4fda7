#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/tensor.hpp"

namespace reverbdoa {

// Forward/backward kernel pairs used by the tape. Layouts:
//   conv2d            x[Cin,H,W]  w[Cout,Cin,KH,KW]  b[Cout]
//   transpose_conv2d  x[Cin,H,W]  w[Cin,Cout,KH,KW]  b[Cout]
//   dense             x[N]        w[O,N]             b[O]
// transpose_conv2d is the exact adjoint of conv2d with respect to the input,
// so a conv weight buffer reinterpreted with the transposed layout computes
// conv's input gradient. All backward kernels accumulate into their outputs.

inline void check_conv_shapes(const Tensor& x, const Tensor& w,
                              const Tensor& b, int pad, const char* where) {
  require_rank(x, 3, where);
  require_rank(w, 4, where);
  require_rank(b, 1, where);
  if (pad < 0) throw dimension_error(std::string(where) + ": negative pad");
  if (x.dim(0) != w.dim(1)) {
    throw dimension_error(std::string(where) + ": input channels " +
                          x.shape_str() + " vs weight " + w.shape_str());
  }
  if (b.dim(0) != w.dim(0)) {
    throw dimension_error(std::string(where) + ": bias " + b.shape_str() +
                          " vs weight " + w.shape_str());
  }
}

inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                             int pad) {
  check_conv_shapes(x, w, b, pad, "conv2d");
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int Ho = H + 2 * pad - KH + 1;
  const int Wo = W + 2 * pad - KW + 1;
  if (Ho <= 0 || Wo <= 0) {
    throw dimension_error("conv2d: kernel larger than padded input");
  }
  Tensor y({Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co) {
    double* yc = &y.values[static_cast<std::size_t>(co) * Ho * Wo];
    const double bias = b[co];
    for (int i = 0; i < Ho * Wo; ++i) yc[i] = bias;
    for (int ci = 0; ci < Cin; ++ci) {
      const double* xc = &x.values[static_cast<std::size_t>(ci) * H * W];
      for (int u = 0; u < KH; ++u) {
        for (int v = 0; v < KW; ++v) {
          const double wv = w.at(co, ci, u, v);
          const int j0 = std::max(0, pad - v);
          const int j1 = std::min(Wo, W + pad - v);
          for (int i = 0; i < Ho; ++i) {
            const int xi = i + u - pad;
            if (xi < 0 || xi >= H) continue;
            const double* xrow = xc + static_cast<std::size_t>(xi) * W + v - pad;
            double* yrow = yc + static_cast<std::size_t>(i) * Wo;
            for (int j = j0; j < j1; ++j) yrow[j] += wv * xrow[j];
          }
        }
      }
    }
  }
  return y;
}

inline void conv2d_backward(const Tensor& x, const Tensor& w,
                            const Tensor& gy, int pad, Tensor* gx, Tensor* gw,
                            Tensor* gb) {
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int Ho = gy.dim(1), Wo = gy.dim(2);
  if (gb) {
    for (int co = 0; co < Cout; ++co) {
      const double* gc = &gy.values[static_cast<std::size_t>(co) * Ho * Wo];
      double s = 0.0;
      for (int i = 0; i < Ho * Wo; ++i) s += gc[i];
      (*gb)[co] += s;
    }
  }
  for (int co = 0; co < Cout; ++co) {
    const double* gc = &gy.values[static_cast<std::size_t>(co) * Ho * Wo];
    for (int ci = 0; ci < Cin; ++ci) {
      const double* xc = &x.values[static_cast<std::size_t>(ci) * H * W];
      double* gxc =
          gx ? &gx->values[static_cast<std::size_t>(ci) * H * W] : nullptr;
      for (int u = 0; u < KH; ++u) {
        for (int v = 0; v < KW; ++v) {
          const double wv = w.at(co, ci, u, v);
          const int j0 = std::max(0, pad - v);
          const int j1 = std::min(Wo, W + pad - v);
          double acc = 0.0;
          for (int i = 0; i < Ho; ++i) {
            const int xi = i + u - pad;
            if (xi < 0 || xi >= H) continue;
            const double* xrow =
                xc + static_cast<std::size_t>(xi) * W + v - pad;
            double* gxrow =
                gxc ? gxc + static_cast<std::size_t>(xi) * W + v - pad
                    : nullptr;
            const double* grow = gc + static_cast<std::size_t>(i) * Wo;
            if (gw) {
              for (int j = j0; j < j1; ++j) acc += grow[j] * xrow[j];
            }
            if (gxrow) {
              for (int j = j0; j < j1; ++j) gxrow[j] += wv * grow[j];
            }
          }
          if (gw) gw->at(co, ci, u, v) += acc;
        }
      }
    }
  }
}

inline Tensor transpose_conv2d_forward(const Tensor& x, const Tensor& w,
                                       const Tensor& b, int pad) {
  require_rank(x, 3, "transpose_conv2d");
  require_rank(w, 4, "transpose_conv2d");
  require_rank(b, 1, "transpose_conv2d");
  if (x.dim(0) != w.dim(0)) {
    throw dimension_error("transpose_conv2d: input channels " + x.shape_str() +
                          " vs weight " + w.shape_str());
  }
  if (b.dim(0) != w.dim(1)) {
    throw dimension_error("transpose_conv2d: bias " + b.shape_str() +
                          " vs weight " + w.shape_str());
  }
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  const int Ho = H - 2 * pad + KH - 1;
  const int Wo = W - 2 * pad + KW - 1;
  if (Ho <= 0 || Wo <= 0) {
    throw dimension_error("transpose_conv2d: output collapses to nothing");
  }
  Tensor y({Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co) {
    double* yc = &y.values[static_cast<std::size_t>(co) * Ho * Wo];
    const double bias = b[co];
    for (int i = 0; i < Ho * Wo; ++i) yc[i] = bias;
    for (int ci = 0; ci < Cin; ++ci) {
      const double* xc = &x.values[static_cast<std::size_t>(ci) * H * W];
      for (int u = 0; u < KH; ++u) {
        for (int v = 0; v < KW; ++v) {
          const double wv = w.at(ci, co, u, v);
          // y[co,a,b] += x[ci, a-u+pad, b-v+pad] * w
          const int b0 = std::max(0, v - pad);
          const int b1 = std::min(Wo, W + v - pad);
          for (int a = 0; a < Ho; ++a) {
            const int xi = a - u + pad;
            if (xi < 0 || xi >= H) continue;
            const double* xrow =
                xc + static_cast<std::size_t>(xi) * W + pad - v;
            double* yrow = yc + static_cast<std::size_t>(a) * Wo;
            for (int j = b0; j < b1; ++j) yrow[j] += wv * xrow[j];
          }
        }
      }
    }
  }
  return y;
}

inline void transpose_conv2d_backward(const Tensor& x, const Tensor& w,
                                      const Tensor& gy, int pad, Tensor* gx,
                                      Tensor* gw, Tensor* gb) {
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  const int Ho = gy.dim(1), Wo = gy.dim(2);
  if (gb) {
    for (int co = 0; co < Cout; ++co) {
      const double* gc = &gy.values[static_cast<std::size_t>(co) * Ho * Wo];
      double s = 0.0;
      for (int i = 0; i < Ho * Wo; ++i) s += gc[i];
      (*gb)[co] += s;
    }
  }
  for (int ci = 0; ci < Cin; ++ci) {
    const double* xc = &x.values[static_cast<std::size_t>(ci) * H * W];
    double* gxc =
        gx ? &gx->values[static_cast<std::size_t>(ci) * H * W] : nullptr;
    for (int co = 0; co < Cout; ++co) {
      const double* gc = &gy.values[static_cast<std::size_t>(co) * Ho * Wo];
      for (int u = 0; u < KH; ++u) {
        for (int v = 0; v < KW; ++v) {
          const double wv = w.at(ci, co, u, v);
          const int b0 = std::max(0, v - pad);
          const int b1 = std::min(Wo, W + v - pad);
          double acc = 0.0;
          for (int a = 0; a < Ho; ++a) {
            const int xi = a - u + pad;
            if (xi < 0 || xi >= H) continue;
            const double* xrow =
                xc + static_cast<std::size_t>(xi) * W + pad - v;
            double* gxrow =
                gxc ? gxc + static_cast<std::size_t>(xi) * W + pad - v
                    : nullptr;
            const double* grow = gc + static_cast<std::size_t>(a) * Wo;
            if (gw) {
              for (int j = b0; j < b1; ++j) acc += xrow[j] * grow[j];
            }
            if (gxrow) {
              for (int j = b0; j < b1; ++j) gxrow[j] += wv * grow[j];
            }
          }
          if (gw) gw->at(ci, co, u, v) += acc;
        }
      }
    }
  }
}

struct PoolResult {
  Tensor values;
  // Flat index into the pooling input for each output cell; ties resolve to
  // the first maximum in row-major scan order of the 2x2 block.
  std::vector<int> argmax;
};

inline PoolResult max_pool2d_forward(const Tensor& x) {
  require_rank(x, 3, "max_pool2d");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw dimension_error("max_pool2d: input " + x.shape_str() +
                          " not divisible by 2x2 window");
  }
  const int Ho = H / 2, Wo = W / 2;
  PoolResult r{Tensor({C, Ho, Wo}), std::vector<int>(
                                        static_cast<std::size_t>(C) * Ho * Wo)};
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        int best = ((c * H + 2 * i) * W) + 2 * j;
        double bv = x.values[static_cast<std::size_t>(best)];
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const int idx = ((c * H + 2 * i + di) * W) + 2 * j + dj;
            const double v = x.values[static_cast<std::size_t>(idx)];
            if (v > bv) {
              bv = v;
              best = idx;
            }
          }
        }
        r.values.at(c, i, j) = bv;
        r.argmax[(static_cast<std::size_t>(c) * Ho + i) * Wo + j] = best;
      }
    }
  }
  return r;
}

inline void max_pool2d_backward(const std::vector<int>& argmax,
                                const Tensor& gy, Tensor* gx) {
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    gx->values[static_cast<std::size_t>(argmax[i])] += gy.values[i];
  }
}

// Upsamples by 2x, writing each input value to the top-left cell of its 2x2
// output block. The placement is a fixed choice, not tied to pooling indices
// elsewhere in a model, which keeps decoder layers independent of encoders.
inline Tensor max_unpool2d_forward(const Tensor& x) {
  require_rank(x, 3, "max_unpool2d");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        y.at(c, 2 * i, 2 * j) = x.at(c, i, j);
      }
    }
  }
  return y;
}

inline void max_unpool2d_backward(const Tensor& gy, Tensor* gx) {
  const int C = gx->dim(0), H = gx->dim(1), W = gx->dim(2);
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        gx->at(c, i, j) += gy.at(c, 2 * i, 2 * j);
      }
    }
  }
}

inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(w, 2, "dense");
  require_rank(b, 1, "dense");
  const int O = w.dim(0), N = w.dim(1);
  if (x.numel() != N) {
    throw dimension_error("dense: input " + x.shape_str() + " vs weight " +
                          w.shape_str());
  }
  if (b.dim(0) != O) {
    throw dimension_error("dense: bias " + b.shape_str() + " vs weight " +
                          w.shape_str());
  }
  Tensor y({O});
  const double* xp = x.values.data();
  for (int o = 0; o < O; ++o) {
    const double* wr = &w.values[static_cast<std::size_t>(o) * N];
    double acc = b[o];
    for (int n = 0; n < N; ++n) acc += wr[n] * xp[n];
    y[o] = acc;
  }
  return y;
}

inline void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                           Tensor* gx, Tensor* gw, Tensor* gb) {
  const int O = w.dim(0), N = w.dim(1);
  const double* xp = x.values.data();
  for (int o = 0; o < O; ++o) {
    const double g = gy[o];
    if (gb) (*gb)[o] += g;
    const double* wr = &w.values[static_cast<std::size_t>(o) * N];
    if (gw) {
      double* gwr = &gw->values[static_cast<std::size_t>(o) * N];
      for (int n = 0; n < N; ++n) gwr[n] += g * xp[n];
    }
    if (gx) {
      double* gxp = gx->values.data();
      for (int n = 0; n < N; ++n) gxp[n] += g * wr[n];
    }
  }
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values) v = v > 0.0 ? v : 0.0;
  return y;
}

inline void relu_backward(const Tensor& x, const Tensor& gy, Tensor* gx) {
  for (int i = 0; i < x.numel(); ++i) {
    if (x[i] > 0.0) (*gx)[i] += gy[i];
  }
}

inline Tensor softmax_forward(const Tensor& x) {
  Tensor y = x;
  double m = x[0];
  for (double v : x.values) m = std::max(m, v);
  double z = 0.0;
  for (int i = 0; i < x.numel(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (double& v : y.values) v /= z;
  return y;
}

inline void softmax_backward(const Tensor& y, const Tensor& gy, Tensor* gx) {
  double dot = 0.0;
  for (int i = 0; i < y.numel(); ++i) dot += gy[i] * y[i];
  for (int i = 0; i < y.numel(); ++i) (*gx)[i] += y[i] * (gy[i] - dot);
}

// Sum over elements of a diagonal Gaussian log density. Returns a scalar.
inline double gaussian_log_prob_forward(const Tensor& x, const Tensor& mu,
                                        const Tensor& var) {
  require_same_shape(x, mu, "gaussian_log_prob");
  require_same_shape(x, var, "gaussian_log_prob");
  constexpr double ln_2pi = 1.8378770664093453;
  double acc = 0.0;
  for (int i = 0; i < x.numel(); ++i) {
    if (!(var[i] > 0.0)) {
      throw domain_error("gaussian_log_prob: variance must be positive");
    }
    const double d = x[i] - mu[i];
    acc += -0.5 * (ln_2pi + std::log(var[i])) - d * d / (2.0 * var[i]);
  }
  return acc;
}

inline void gaussian_log_prob_backward(const Tensor& x, const Tensor& mu,
                                       const Tensor& var, double g, Tensor* gx,
                                       Tensor* gmu, Tensor* gvar) {
  for (int i = 0; i < x.numel(); ++i) {
    const double d = x[i] - mu[i];
    const double inv = 1.0 / var[i];
    if (gx) (*gx)[i] += g * (-d * inv);
    if (gmu) (*gmu)[i] += g * (d * inv);
    if (gvar) (*gvar)[i] += g * 0.5 * (d * d * inv - 1.0) * inv;
  }
}

// log of one probability-vector entry, with an additive guard against log(0).
inline double categorical_log_prob_forward(int y, const Tensor& pi,
                                           double guard) {
  if (y < 0 || y >= pi.numel()) {
    throw dimension_error("categorical_log_prob: class index out of range");
  }
  return std::log(pi[y] + guard);
}

inline void categorical_log_prob_backward(int y, const Tensor& pi,
                                          double guard, double g, Tensor* gpi) {
  (*gpi)[y] += g / (pi[y] + guard);
}

// z = mu + sqrt(var) * eps, elementwise; eps is a constant draw.
inline Tensor reparameterize_forward(const Tensor& mu, const Tensor& var,
                                     const Tensor& eps) {
  require_same_shape(mu, var, "reparameterize");
  require_same_shape(mu, eps, "reparameterize");
  Tensor z = mu;
  for (int i = 0; i < mu.numel(); ++i) {
    if (!(var[i] > 0.0)) {
      throw domain_error("reparameterize: variance must be positive");
    }
    z[i] = mu[i] + std::sqrt(var[i]) * eps[i];
  }
  return z;
}

inline void reparameterize_backward(const Tensor& var, const Tensor& eps,
                                    const Tensor& gz, Tensor* gmu,
                                    Tensor* gvar) {
  for (int i = 0; i < var.numel(); ++i) {
    if (gmu) (*gmu)[i] += gz[i];
    if (gvar) (*gvar)[i] += gz[i] * eps[i] / (2.0 * std::sqrt(var[i]));
  }
}

}  // namespace reverbdoa
