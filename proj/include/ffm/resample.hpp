#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ffm/tensor.hpp"

namespace ffm {

/// One axis of a bilinear resampling with the align-corners-false convention.
struct LinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;

  LinearTaps(int in, int out) : lo(out), hi(out), frac(out) {
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      int i0 = static_cast<int>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      lo[o] = i0;
      hi[o] = std::min(i0 + 1, in - 1);
      frac[o] = src - i0;
    }
  }
};

/// Bilinear resize of every channel of a (C, H, W) tensor to (C, out_h, out_w).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& in, std::size_t out_h, std::size_t out_w) {
  const int ih = static_cast<int>(in.dim(1)), iw = static_cast<int>(in.dim(2));
  Tensor<T> out({in.dim(0), out_h, out_w});
  if (in.dim(1) == out_h && in.dim(2) == out_w) {
    out.vec() = in.vec();
    return out;
  }
  const LinearTaps ty(ih, static_cast<int>(out_h)), tx(iw, static_cast<int>(out_w));
  for (std::size_t c = 0; c < in.dim(0); ++c) {
    const T* src = in.channel(c);
    T* dst = out.channel(c);
    for (std::size_t y = 0; y < out_h; ++y) {
      const T* r0 = src + ty.lo[y] * iw;
      const T* r1 = src + ty.hi[y] * iw;
      const T fy = static_cast<T>(ty.frac[y]);
      for (std::size_t x = 0; x < out_w; ++x) {
        const T fx = static_cast<T>(tx.frac[x]);
        const T top = r0[tx.lo[x]] + fx * (r0[tx.hi[x]] - r0[tx.lo[x]]);
        const T bot = r1[tx.lo[x]] + fx * (r1[tx.hi[x]] - r1[tx.lo[x]]);
        dst[y * out_w + x] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

/// Adjoint of bilinear_resize: scatters output gradients back onto the input grid.
template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_out, std::size_t in_h, std::size_t in_w) {
  const std::size_t oh = grad_out.dim(1), ow = grad_out.dim(2);
  Tensor<T> grad_in({grad_out.dim(0), in_h, in_w});
  if (oh == in_h && ow == in_w) {
    grad_in.vec() = grad_out.vec();
    return grad_in;
  }
  const LinearTaps ty(static_cast<int>(in_h), static_cast<int>(oh));
  const LinearTaps tx(static_cast<int>(in_w), static_cast<int>(ow));
  for (std::size_t c = 0; c < grad_out.dim(0); ++c) {
    const T* g = grad_out.channel(c);
    T* dst = grad_in.channel(c);
    for (std::size_t y = 0; y < oh; ++y) {
      const T fy = static_cast<T>(ty.frac[y]);
      T* r0 = dst + ty.lo[y] * in_w;
      T* r1 = dst + ty.hi[y] * in_w;
      for (std::size_t x = 0; x < ow; ++x) {
        const T fx = static_cast<T>(tx.frac[x]);
        const T v = g[y * ow + x];
        r0[tx.lo[x]] += v * (1 - fy) * (1 - fx);
        r0[tx.hi[x]] += v * (1 - fy) * fx;
        r1[tx.lo[x]] += v * fy * (1 - fx);
        r1[tx.hi[x]] += v * fy * fx;
      }
    }
  }
  return grad_in;
}

}  // namespace ffm
