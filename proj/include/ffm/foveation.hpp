#pragma once

// Foveated weighting of a five-level pyramid.
//
// A fixation f induces a relative resolution R(x) = alpha / (alpha + |x - f| / ppd); several
// fixations combine by pointwise max. Level i (1..5) has transfer function
// T_i(r) = exp(-(2^(i-3) r / sigma)^2 / 2) whose half-maximum R_i* splits the resolution axis
// into four bins. A location whose R lies in (R_j*, R_{j-1}*] blends levels j-1 and j with
// W_{j-1} = (0.5 - T_j(R)) / (T_{j-1}(R) - T_j(R)) and W_j = 1 - W_{j-1}. Locations finer than
// R_1* take level 1 only, locations at or below R_5* take level 5 only.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/tensor.hpp"
#include "ffm/types.hpp"

namespace ffm::fov {

inline constexpr int kLevels = 5;

struct RetinaParams {
  double alpha = 2.5;  // degrees
  double sigma = 0.3;
  double ppd = 4.57;   // pixels per degree at the resolution of the map being computed

  void validate() const {
    if (!(alpha > 0) || !(sigma > 0) || !(ppd > 0)) {
      throw std::invalid_argument("retina parameters must be positive");
    }
  }
};

/// A map grid laid over an image; map pixel (i, j) is centred at image ((j+0.5)/sx, (i+0.5)/sy).
struct MapGeometry {
  int height = 160;
  int width = 256;
  int image_h = kImageHeight;
  int image_w = kImageWidth;

  double scale_x() const { return static_cast<double>(width) / image_w; }
  double scale_y() const { return static_cast<double>(height) / image_h; }
};

inline double relative_resolution(double distance_px, double alpha, double ppd) {
  return alpha / (alpha + distance_px / ppd);
}

struct ResolutionMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;       // R at every location, in (0, 1]
  std::vector<double> distance;     // map-pixel distance to the governing fixation
  std::vector<int> nearest;         // index of the governing fixation

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline ResolutionMap resolution_map(std::span<const Fixation> fixations, const RetinaParams& params,
                                    const MapGeometry& geom) {
  if (fixations.empty()) throw std::invalid_argument("no fixations");
  params.validate();
  const double sx = geom.scale_x(), sy = geom.scale_y();
  ResolutionMap map;
  map.height = geom.height;
  map.width = geom.width;
  const std::size_t n = static_cast<std::size_t>(geom.height) * geom.width;
  map.values.assign(n, 0.0);
  map.distance.assign(n, std::numeric_limits<double>::infinity());
  map.nearest.assign(n, 0);
  for (std::size_t k = 0; k < fixations.size(); ++k) {
    const double fx = fixations[k].x * sx, fy = fixations[k].y * sy;
    for (int i = 0; i < geom.height; ++i) {
      const double dy = (i + 0.5) - fy;
      for (int j = 0; j < geom.width; ++j) {
        const double dx = (j + 0.5) - fx;
        const double d = std::sqrt(dx * dx + dy * dy);
        const std::size_t idx = static_cast<std::size_t>(i) * geom.width + j;
        if (d < map.distance[idx]) {
          map.distance[idx] = d;
          map.nearest[idx] = static_cast<int>(k);
        }
      }
    }
  }
  for (std::size_t idx = 0; idx < n; ++idx) {
    map.values[idx] = relative_resolution(map.distance[idx], params.alpha, params.ppd);
  }
  return map;
}

/// Accumulates one more fixation into an existing map (pointwise max).
inline void accumulate_fixation(ResolutionMap& map, const Fixation& f, int index, const RetinaParams& params,
                                const MapGeometry& geom) {
  const double fx = f.x * geom.scale_x(), fy = f.y * geom.scale_y();
  for (int i = 0; i < map.height; ++i) {
    for (int j = 0; j < map.width; ++j) {
      const double dx = (j + 0.5) - fx, dy = (i + 0.5) - fy;
      const double d = std::sqrt(dx * dx + dy * dy);
      const std::size_t idx = static_cast<std::size_t>(i) * map.width + j;
      if (d < map.distance[idx]) {
        map.distance[idx] = d;
        map.nearest[idx] = index;
        map.values[idx] = relative_resolution(d, params.alpha, params.ppd);
      }
    }
  }
}

inline double level_gain(int level) {
  static constexpr double kGain[kLevels] = {0.25, 0.5, 1.0, 2.0, 4.0};
  return kGain[level - 1];
}

/// T_i(r) for level i in 1..5.
inline double transfer_amplitude(int level, double r, double sigma) {
  const double z = level_gain(level) * r / sigma;
  return std::exp(-0.5 * z * z);
}

/// R_i*, the resolution at which T_i is at half maximum.
inline double half_max_resolution(int level, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  return sigma * std::sqrt(2.0 * std::log(2.0)) / level_gain(level);
}

/// Blend weights at one location. `lower` is the 0-based index of the finer of the two
/// active levels, or -1 when the location is clamped to a single level.
struct LocalWeights {
  std::array<double, kLevels> w{};
  int lower = -1;
};

inline LocalWeights local_weights(double r, double sigma) {
  LocalWeights out;
  const double base = half_max_resolution(3, sigma);
  const double rstar[kLevels] = {base * 4, base * 2, base, base / 2, base / 4};
  if (r > rstar[0]) {
    out.w[0] = 1.0;
    return out;
  }
  if (r <= rstar[4]) {
    out.w[4] = 1.0;
    return out;
  }
  // Bin j (2..5): R_{j-1}* >= r > R_j*.
  for (int j = 2; j <= kLevels; ++j) {
    if (r > rstar[j - 1]) {
      const double a = transfer_amplitude(j - 1, r, sigma);
      const double b = transfer_amplitude(j, r, sigma);
      const double coarse_w = (0.5 - b) / (a - b);
      out.w[j - 2] = coarse_w;
      out.w[j - 1] = 1.0 - coarse_w;
      out.lower = j - 2;
      return out;
    }
  }
  out.w[4] = 1.0;
  return out;
}

/// W_1..W_5 stacked as a (5, H, W) tensor.
struct WeightMaps {
  Tensor<double> weights;
  std::vector<int> lower;  // per location, see LocalWeights::lower

  int height() const { return static_cast<int>(weights.dim(1)); }
  int width() const { return static_cast<int>(weights.dim(2)); }
};

inline WeightMaps weight_maps(const ResolutionMap& r, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  WeightMaps out;
  const std::size_t plane = static_cast<std::size_t>(r.height) * r.width;
  out.weights = Tensor<double>({kLevels, static_cast<std::size_t>(r.height), static_cast<std::size_t>(r.width)});
  out.lower.assign(plane, -1);
  for (std::size_t idx = 0; idx < plane; ++idx) {
    const auto lw = local_weights(r.values[idx], sigma);
    for (int l = 0; l < kLevels; ++l) out.weights[l * plane + idx] = lw.w[l];
    out.lower[idx] = lw.lower;
  }
  return out;
}

/// Weight maps with every location held in the bin of `reference` (piecewise evaluation).
inline WeightMaps weight_maps_in_bins(const ResolutionMap& r, double sigma, const WeightMaps& reference) {
  WeightMaps out;
  const std::size_t plane = static_cast<std::size_t>(r.height) * r.width;
  out.weights = Tensor<double>(reference.weights.shape());
  out.lower = reference.lower;
  for (std::size_t idx = 0; idx < plane; ++idx) {
    const int lo = reference.lower[idx];
    if (lo < 0) {
      for (int l = 0; l < kLevels; ++l) out.weights[l * plane + idx] = reference.weights[l * plane + idx];
      continue;
    }
    const double a = transfer_amplitude(lo + 1, r.values[idx], sigma);
    const double b = transfer_amplitude(lo + 2, r.values[idx], sigma);
    const double coarse_w = (0.5 - b) / (a - b);
    out.weights[lo * plane + idx] = coarse_w;
    out.weights[(lo + 1) * plane + idx] = 1.0 - coarse_w;
  }
  return out;
}

struct RetinaGrad {
  double alpha = 0.0;
  double sigma = 0.0;
};

/// Reverse pass of resolution_map + weight_maps: given dL/dW (5, H, W), returns dL/dalpha and
/// dL/dsigma. Bin membership and the governing fixation are held fixed.
inline RetinaGrad weight_maps_backward(const ResolutionMap& r, const WeightMaps& wm, const Tensor<double>& grad_w,
                                       const RetinaParams& params) {
  RetinaGrad g;
  const std::size_t plane = static_cast<std::size_t>(r.height) * r.width;
  const double sigma = params.sigma, alpha = params.alpha, ppd = params.ppd;
  for (std::size_t idx = 0; idx < plane; ++idx) {
    const int lo = wm.lower[idx];
    if (lo < 0) continue;
    const double gw = grad_w[lo * plane + idx] - grad_w[(lo + 1) * plane + idx];
    if (gw == 0.0) continue;
    const double rr = r.values[idx];
    const int j = lo + 2;  // 1-based index of the coarser level
    const double a = transfer_amplitude(j - 1, rr, sigma);
    const double b = transfer_amplitude(j, rr, sigma);
    const double denom = a - b;
    const double dw_da = -(0.5 - b) / (denom * denom);
    const double dw_db = (0.5 - a) / (denom * denom);
    const double ka = level_gain(j - 1), kb = level_gain(j);
    const double da_dr = -a * ka * ka * rr / (sigma * sigma);
    const double db_dr = -b * kb * kb * rr / (sigma * sigma);
    const double dw_dr = dw_da * da_dr + dw_db * db_dr;
    const double dw_dsigma = -(rr / sigma) * dw_dr;
    const double ecc = r.distance[idx] / ppd;
    const double dr_dalpha = ecc / ((alpha + ecc) * (alpha + ecc));
    g.alpha += gw * dw_dr * dr_dalpha;
    g.sigma += gw * dw_dsigma;
  }
  return g;
}

/// M = sum_i W_i (.) P_i, with the spatial weights broadcast across channels.
template <typename T>
Tensor<T> blend(std::span<const Tensor<T>> levels, const Tensor<double>& weights) {
  if (levels.size() != kLevels) throw std::invalid_argument("blend needs exactly 5 levels");
  const auto& shape = levels[0].shape();
  for (const auto& l : levels) {
    if (l.shape() != shape) throw std::invalid_argument("blend levels must share dims");
  }
  if (weights.dim(1) != shape[1] || weights.dim(2) != shape[2]) {
    throw std::invalid_argument("weight map dims do not match the levels");
  }
  const std::size_t plane = shape[1] * shape[2];
  Tensor<T> out(shape);
  for (int l = 0; l < kLevels; ++l) {
    const double* w = weights.data() + l * plane;
    for (std::size_t c = 0; c < shape[0]; ++c) {
      const T* src = levels[l].channel(c);
      T* dst = out.channel(c);
      for (std::size_t i = 0; i < plane; ++i) {
        if (w[i] != 0.0) dst[i] += static_cast<T>(w[i]) * src[i];
      }
    }
  }
  return out;
}

/// Reverse pass of blend. Writes dL/dP_i into `grad_levels` and returns dL/dW.
template <typename T>
Tensor<double> blend_backward(std::span<const Tensor<T>> levels, const Tensor<double>& weights,
                              const Tensor<T>& grad_out, std::vector<Tensor<T>>& grad_levels) {
  const auto& shape = levels[0].shape();
  const std::size_t plane = shape[1] * shape[2];
  Tensor<double> grad_w(weights.shape());
  grad_levels.assign(kLevels, Tensor<T>(shape));
  for (int l = 0; l < kLevels; ++l) {
    const double* w = weights.data() + l * plane;
    double* gw = grad_w.data() + l * plane;
    for (std::size_t c = 0; c < shape[0]; ++c) {
      const T* g = grad_out.channel(c);
      const T* p = levels[l].channel(c);
      T* gp = grad_levels[l].channel(c);
      for (std::size_t i = 0; i < plane; ++i) {
        gp[i] = static_cast<T>(w[i]) * g[i];
        gw[i] += static_cast<double>(g[i]) * static_cast<double>(p[i]);
      }
    }
  }
  return grad_w;
}

}  // namespace ffm::fov
