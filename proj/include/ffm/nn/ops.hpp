#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ffm/tensor.hpp"

namespace ffm::nn {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

inline std::size_t conv_out(std::size_t n, int k, int stride, int pad) {
  return (n + 2 * pad - k) / stride + 1;
}

/// Output columns [lo, hi) whose input column ox * stride + kx - pad lies inside [0, w).
inline std::pair<int, int> valid_range(int k_off, int stride, int pad, int w, int ow) {
  int lo = 0;
  while (lo < ow && lo * stride + k_off - pad < 0) ++lo;
  int hi = ow;
  while (hi > lo && (hi - 1) * stride + k_off - pad >= w) --hi;
  return {lo, hi};
}

/// Unfolds (C, H, W) into a (C*k*k, OH*OW) patch matrix.
template <typename T>
MatR<T> im2col(const Tensor<T>& x, int k, int stride, int pad) {
  const int c = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const int oh = static_cast<int>(conv_out(h, k, stride, pad)), ow = static_cast<int>(conv_out(w, k, stride, pad));
  MatR<T> cols(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (int kx = 0; kx < k; ++kx) {
    const auto [lo, hi] = valid_range(kx, stride, pad, w, ow);
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.channel(ch);
      for (int ky = 0; ky < k; ++ky) {
        T* row = cols.data() + (static_cast<std::size_t>(ch * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          std::fill(dst, dst + lo, T{0});
          std::fill(dst + hi, dst + ow, T{0});
          const T* line = src + static_cast<std::size_t>(iy) * w + kx - pad;
          if (stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * stride];
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col.
template <typename T>
Tensor<T> col2im(const MatR<T>& cols, const Shape& in_shape, int k, int stride, int pad) {
  const int c = static_cast<int>(in_shape[0]), h = static_cast<int>(in_shape[1]), w = static_cast<int>(in_shape[2]);
  const int oh = static_cast<int>(conv_out(h, k, stride, pad)), ow = static_cast<int>(conv_out(w, k, stride, pad));
  Tensor<T> x(in_shape);
  for (int kx = 0; kx < k; ++kx) {
    const auto [lo, hi] = valid_range(kx, stride, pad, w, ow);
    for (int ch = 0; ch < c; ++ch) {
      T* dst = x.channel(ch);
      for (int ky = 0; ky < k; ++ky) {
        const T* row = cols.data() + (static_cast<std::size_t>(ch * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* line = dst + static_cast<std::size_t>(iy) * w + kx - pad;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) line[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) line[ox * stride] += src[ox];
          }
        }
      }
    }
  }
  return x;
}

/// Square-kernel convolution. weight: (Cout, Cin, k, k); bias: (Cout).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  const int k = static_cast<int>(weight.dim(2));
  const std::size_t cout = weight.dim(0);
  const std::size_t oh = conv_out(x.dim(1), k, stride, pad), ow = conv_out(x.dim(2), k, stride, pad);
  Tensor<T> out({cout, oh, ow});
  CMapR<T> wm(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(weight.size() / cout));
  MapR<T> om(out.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(oh * ow));
  if (k == 1 && stride == 1 && pad == 0) {
    CMapR<T> xm(x.data(), static_cast<Eigen::Index>(x.dim(0)), static_cast<Eigen::Index>(oh * ow));
    om.noalias() = wm * xm;
  } else {
    const MatR<T> cols = im2col(x, k, stride, pad);
    om.noalias() = wm * cols;
  }
  for (std::size_t o = 0; o < cout; ++o) om.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  return out;
}

/// Reverse pass of conv2d; accumulates into grad_weight / grad_bias and returns dL/dx when asked.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad, const Tensor<T>& grad_out,
                          Tensor<T>& grad_weight, Tensor<T>& grad_bias, bool need_input_grad) {
  const int k = static_cast<int>(weight.dim(2));
  const std::size_t cout = weight.dim(0);
  const auto n = static_cast<Eigen::Index>(grad_out.dim(1) * grad_out.dim(2));
  const auto kk = static_cast<Eigen::Index>(weight.size() / cout);
  CMapR<T> gm(grad_out.data(), static_cast<Eigen::Index>(cout), n);
  CMapR<T> wm(weight.data(), static_cast<Eigen::Index>(cout), kk);
  MapR<T> gwm(grad_weight.data(), static_cast<Eigen::Index>(cout), kk);
  for (std::size_t o = 0; o < cout; ++o) grad_bias[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
  const bool pointwise = k == 1 && stride == 1 && pad == 0;
  if (pointwise) {
    CMapR<T> xm(x.data(), kk, n);
    gwm.noalias() += gm * xm.transpose();
    if (!need_input_grad) return {};
    Tensor<T> gx(x.shape());
    MapR<T> gxm(gx.data(), kk, n);
    gxm.noalias() = wm.transpose() * gm;
    return gx;
  }
  const MatR<T> cols = im2col(x, k, stride, pad);
  gwm.noalias() += gm * cols.transpose();
  if (!need_input_grad) return {};
  const MatR<T> gcols = wm.transpose() * gm;
  return col2im(gcols, x.shape(), k, stride, pad);
}

/// LayerNorm across channels at every spatial location, followed by a per-channel affine map.
template <typename T>
struct NormCache {
  Tensor<T> normalized;      // x_hat
  std::vector<T> inv_std;    // per location
};

inline constexpr double kNormEps = 1e-5;

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, NormCache<T>* cache) {
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor<T> xhat(x.shape()), out(x.shape());
  std::vector<T> mean(plane, T{0}), var(plane, T{0}), inv(plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* p = x.channel(ch);
    for (std::size_t i = 0; i < plane; ++i) mean[i] += p[i];
  }
  for (auto& m : mean) m /= static_cast<T>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* p = x.channel(ch);
    for (std::size_t i = 0; i < plane; ++i) {
      const T d = p[i] - mean[i];
      var[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < plane; ++i) inv[i] = T{1} / std::sqrt(var[i] / static_cast<T>(c) + static_cast<T>(kNormEps));
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* p = x.channel(ch);
    T* xh = xhat.channel(ch);
    T* o = out.channel(ch);
    const T g = gamma[ch], b = beta[ch];
    for (std::size_t i = 0; i < plane; ++i) {
      xh[i] = (p[i] - mean[i]) * inv[i];
      o[i] = g * xh[i] + b;
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm_backward(const NormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                              Tensor<T>& grad_gamma, Tensor<T>& grad_beta) {
  const auto& xhat = cache.normalized;
  const std::size_t c = xhat.dim(0), plane = xhat.dim(1) * xhat.dim(2);
  std::vector<T> mean_g(plane, T{0}), mean_gx(plane, T{0});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* g = grad_out.channel(ch);
    const T* xh = xhat.channel(ch);
    T sg = 0, sgx = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      sg += g[i];
      sgx += g[i] * xh[i];
      const T gh = g[i] * gamma[ch];
      mean_g[i] += gh;
      mean_gx[i] += gh * xh[i];
    }
    grad_beta[ch] += sg;
    grad_gamma[ch] += sgx;
  }
  const T invc = T{1} / static_cast<T>(c);
  Tensor<T> gx(xhat.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* g = grad_out.channel(ch);
    const T* xh = xhat.channel(ch);
    T* o = gx.channel(ch);
    for (std::size_t i = 0; i < plane; ++i) {
      const T gh = g[i] * gamma[ch];
      o[i] = cache.inv_std[i] * (gh - mean_g[i] * invc - xh[i] * mean_gx[i] * invc);
    }
  }
  return gx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.vec()) v = v > T{0} ? v : T{0};
}

/// ReLU that keeps the on/off pattern of a previous activation.
template <typename T>
void relu_pattern_inplace(Tensor<T>& x, const Tensor<T>& reference) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(reference[i] > T{0})) x[i] = T{0};
  }
}

/// Masks gradients by the (post-ReLU) activation.
template <typename T>
void relu_backward_inplace(const Tensor<T>& activation, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{0})) grad[i] = T{0};
  }
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T softplus(T x) {
  return x > T{20} ? x : std::log1p(std::exp(x));
}

template <typename T>
T softplus_inverse(T y) {
  return y > T{20} ? y : std::log(std::expm1(y));
}

}  // namespace ffm::nn
