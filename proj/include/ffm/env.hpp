#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffm/error.hpp"
#include "ffm/foveation.hpp"
#include "ffm/irl/losses.hpp"
#include "ffm/nn/model.hpp"
#include "ffm/nn/params.hpp"
#include "ffm/pyramid.hpp"
#include "ffm/tensor.hpp"
#include "ffm/types.hpp"

namespace ffm::env {

struct SearchState {
  std::string image_id;
  std::string task;
  std::vector<Fixation> history;  // starts with the initial fixation, never shrinks
  fov::ResolutionMap resolution;
  int steps = 0;
};

/// Initial state: a single fixation at the image center.
inline SearchState reset(const SearchTrial& trial, const ActionGrid& grid, const fov::RetinaParams& retina,
                         const fov::MapGeometry& geom) {
  SearchState s;
  s.image_id = trial.image_id;
  s.task = trial.task;
  s.history = {grid.center()};
  s.resolution = fov::resolution_map(s.history, retina, geom);
  return s;
}

/// Fixates the center of the action's cell; the resolution map takes the pointwise max.
inline SearchState step(SearchState s, int action, const ActionGrid& grid, const fov::RetinaParams& retina,
                        const fov::MapGeometry& geom) {
  const Fixation f = action_to_fixation(action, grid);
  s.history.push_back(f);
  fov::accumulate_fixation(s.resolution, f, static_cast<int>(s.history.size()) - 1, retina, geom);
  ++s.steps;
  return s;
}

enum class Mode { kGreedy, kSample };

inline Mode parse_mode(const std::string& s) {
  if (s == "greedy") return Mode::kGreedy;
  if (s == "sample") return Mode::kSample;
  throw UsageError("rollout mode must be greedy or sample (got '" + s + "')");
}

inline const char* to_string(Mode m) { return m == Mode::kGreedy ? "greedy" : "sample"; }

inline constexpr int kAbsentCap = 10;
inline constexpr int kPresentCap = 6;

struct RolloutConfig {
  Mode mode = Mode::kGreedy;
  int max_new_fixations = kAbsentCap;
  double tau = 0.01;
  std::uint64_t seed = 0;
  double termination_threshold = 0.5;
  bool target_present = false;  // stop on the target box; the classifier is not consulted
  int ior_radius = 2;           // baselines only, in cells

  /// Target-present protocol: cap 6 and bounding-box stopping.
  static RolloutConfig present(RolloutConfig base) {
    base.target_present = true;
    base.max_new_fixations = kPresentCap;
    return base;
  }

  void validate() const {
    if (max_new_fixations < 1) throw UsageError("max_new_fixations must be at least 1");
    if (!(tau > 0)) throw UsageError("tau must be positive");
    if (ior_radius < 0) throw UsageError("ior_radius must be nonnegative");
  }
};

/// Lowest index among the maxima.
template <typename T>
int argmax(std::span<const T> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Inverse-CDF draw from nonnegative weights (need not be normalized).
template <typename T>
int sample_index(std::span<const T> w, std::mt19937_64& rng) {
  double total = 0;
  for (T v : w) total += static_cast<double>(v);
  if (!(total > 0)) throw NumericError("cannot sample from an all-zero distribution");
  const double u = nn::uniform01(rng) * total;
  double acc = 0;
  int last = -1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0)) continue;
    acc += static_cast<double>(w[i]);
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

/// Runs the learned policy on one trial's image and task.
template <typename T>
Scanpath rollout(const nn::Model<T>& model, const nn::ParamStore<T>& params, const FeaturePyramid& pyramid,
                 const SearchTrial& trial, const RolloutConfig& cfg) {
  cfg.validate();
  const auto& mc = model.config();
  const ActionGrid grid = mc.grid();
  const int task = mc.task_index(trial.task);
  if (cfg.target_present && !trial.bbox) {
    throw DataError("target-present rollout on " + trial.image_id + " without a target box");
  }
  std::mt19937_64 rng(cfg.seed);
  Scanpath sp;
  sp.fixations = {grid.center()};
  auto out = model.forward(params, pyramid, sp.fixations, task, nullptr,
                           {.record = false, .detection = false, .termination = false});
  for (int n = 0; n < cfg.max_new_fixations; ++n) {
    int action;
    if (cfg.mode == Mode::kGreedy) {
      action = argmax<T>(out.q_values);
    } else {
      const auto pi = irl::policy_dist<T>(out.q_values, cfg.tau);
      action = sample_index<T>(pi, rng);
    }
    sp.fixations.push_back(action_to_fixation(action, grid));
    if (cfg.target_present && trial.bbox->contains(sp.fixations.back())) {
      sp.terminated = true;
      break;
    }
    if (n + 1 == cfg.max_new_fixations) break;
    out = model.forward(params, pyramid, sp.fixations, task, nullptr,
                        {.record = false, .detection = false, .termination = !cfg.target_present});
    if (!cfg.target_present && out.termination_prob > cfg.termination_threshold) {
      sp.terminated = true;
      break;
    }
  }
  return sp;
}

/// Sequential sampling from a (rows, cols) priority map with inhibition of return.
/// A disc of `radius` cells around each chosen cell is zeroed; radius 0 disables IOR.
inline Scanpath baseline_ior_sample(const Tensor<double>& priority, int n, int radius, std::uint64_t seed,
                                    Mode mode = Mode::kSample, const ActionGrid& grid = {}) {
  if (priority.rank() != 2 || priority.dim(0) != static_cast<std::size_t>(grid.rows) ||
      priority.dim(1) != static_cast<std::size_t>(grid.cols)) {
    throw DataError("priority map must be " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  }
  std::vector<double> map(priority.vec().begin(), priority.vec().end());
  for (double v : map) {
    if (!(v >= 0) || !std::isfinite(v)) throw DataError("priority map must be finite and nonnegative");
  }
  if (std::all_of(map.begin(), map.end(), [](double v) { return v == 0; })) {
    throw DataError("priority map is all zero");
  }
  std::mt19937_64 rng(seed);
  Scanpath sp;
  sp.fixations = {grid.center()};
  for (int k = 0; k < n; ++k) {
    double total = 0;
    for (double v : map) total += v;
    if (!(total > 0)) break;  // everything inhibited
    const int a = mode == Mode::kGreedy ? argmax<double>(map) : sample_index<double>(map, rng);
    sp.fixations.push_back(action_to_fixation(a, grid));
    if (radius <= 0) continue;
    const int r0 = a / grid.cols, c0 = a % grid.cols;
    for (int r = std::max(0, r0 - radius); r <= std::min(grid.rows - 1, r0 + radius); ++r) {
      for (int c = std::max(0, c0 - radius); c <= std::min(grid.cols - 1, c0 + radius); ++c) {
        if ((r - r0) * (r - r0) + (c - c0) * (c - c0) <= radius * radius) map[r * grid.cols + c] = 0;
      }
    }
  }
  return sp;
}

}  // namespace ffm::env
