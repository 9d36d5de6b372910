#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ffm/container.hpp"
#include "ffm/error.hpp"
#include "ffm/tensor.hpp"
#include "ffm/types.hpp"

namespace ffm::metrics {

struct DensityOptions {
  double epsilon = 1e-3;
  double blur_sigma = 1.0;  // in cells; 0 disables the blur
};

/// Per-task fixation probability over the action grid, shape (rows, cols).
struct DensityBaseline {
  std::map<std::string, Tensor<double>> maps;

  const Tensor<double>& at(const std::string& task) const {
    const auto it = maps.find(task);
    if (it == maps.end()) throw DataError("density baseline has no map for task '" + task + "'");
    return it->second;
  }
};

/// Separable Gaussian blur of a (rows, cols) map with zero padding, truncated at ceil(3 sigma).
inline Tensor<double> gaussian_blur(const Tensor<double>& in, double sigma) {
  if (sigma <= 0) return in;
  const int rows = static_cast<int>(in.dim(0)), cols = static_cast<int>(in.dim(1));
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double ks = 0;
  for (int i = -radius; i <= radius; ++i) ks += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= ks;
  Tensor<double> tmp(in.shape()), out(in.shape());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        if (c + i >= 0 && c + i < cols) acc += k[i + radius] * in[r * cols + c + i];
      }
      tmp[r * cols + c] = acc;
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        if (r + i >= 0 && r + i < rows) acc += k[i + radius] * tmp[(r + i) * cols + c];
      }
      out[r * cols + c] = acc;
    }
  }
  return out;
}

/// Histogram -> blur -> normalize -> add epsilon -> renormalize. An empty histogram gives the
/// uniform map.
inline Tensor<double> density_from_counts(const Tensor<double>& counts, const DensityOptions& opt = {}) {
  if (!(opt.epsilon > 0)) throw UsageError("density epsilon must be positive");
  if (opt.blur_sigma < 0) throw UsageError("density blur sigma must be nonnegative");
  Tensor<double> p = gaussian_blur(counts, opt.blur_sigma);
  double total = 0;
  for (double v : p.vec()) total += v;
  if (total > 0) {
    for (double& v : p.vec()) v /= total;
  }
  double z = 0;
  for (double& v : p.vec()) z += v += opt.epsilon;
  for (double& v : p.vec()) v /= z;
  return p;
}

/// Counts every fixation after the first; the initial fixation is set by the protocol.
inline DensityBaseline density_baseline(const std::vector<SearchTrial>& trials, const std::vector<std::string>& tasks,
                                        const ActionGrid& grid = {}, const DensityOptions& opt = {}) {
  std::map<std::string, Tensor<double>> counts;
  for (const auto& t : tasks) {
    counts[t] = Tensor<double>({static_cast<std::size_t>(grid.rows), static_cast<std::size_t>(grid.cols)});
  }
  for (const auto& trial : trials) {
    auto it = counts.find(trial.task);
    if (it == counts.end()) continue;
    for (std::size_t k = 1; k < trial.scanpath.size(); ++k) {
      it->second[fixation_to_action(trial.scanpath.fixations[k], grid)] += 1.0;
    }
  }
  DensityBaseline out;
  for (const auto& [task, c] : counts) out.maps[task] = density_from_counts(c, opt);
  return out;
}

/// One (rows, cols) tensor per task, named by the task.
inline std::vector<NamedTensor> density_to_tensors(const DensityBaseline& d) {
  std::vector<NamedTensor> out;
  for (const auto& [task, m] : d.maps) out.push_back({task, m.cast<float>()});
  return out;
}

inline DensityBaseline density_from_tensors(const std::vector<NamedTensor>& tensors, const ActionGrid& grid = {}) {
  DensityBaseline d;
  for (const auto& nt : tensors) {
    if (nt.tensor.rank() != 2 || nt.tensor.dim(0) != static_cast<std::size_t>(grid.rows) ||
        nt.tensor.dim(1) != static_cast<std::size_t>(grid.cols)) {
      throw DataError("density map '" + nt.name + "' has shape " + shape_string(nt.tensor.shape()) + ", expected (" +
                      std::to_string(grid.rows) + "," + std::to_string(grid.cols) + ")");
    }
    Tensor<double> m = nt.tensor.cast<double>();
    double z = 0;
    for (double v : m.vec()) {
      if (!(v > 0) || !std::isfinite(v)) throw DataError("density map '" + nt.name + "' must be strictly positive");
      z += v;
    }
    for (double& v : m.vec()) v /= z;  // absorbs float rounding
    d.maps[nt.name] = std::move(m);
  }
  return d;
}

}  // namespace ffm::metrics
