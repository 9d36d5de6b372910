#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/metrics/align.hpp"
#include "ffm/metrics/cluster.hpp"
#include "ffm/png_io.hpp"
#include "ffm/types.hpp"

namespace ffm::metrics {

/// Cluster ids of both scanpaths under one model fitted on their union.
inline double sequence_score(const Scanpath& pred, const Scanpath& gt, const ClusterModel& clusters,
                             const AlignmentScoring& scoring = {}) {
  return nw_align(clusters.labels(pred.fixations), clusters.labels(gt.fixations), scoring);
}

inline double sequence_score(const Scanpath& pred, const Scanpath& gt, double bandwidth = kDefaultBandwidth,
                             const AlignmentScoring& scoring = {}) {
  if (pred.fixations.empty() && gt.fixations.empty()) return 1.0;
  std::vector<Fixation> all(pred.fixations);
  all.insert(all.end(), gt.fixations.begin(), gt.fixations.end());
  return sequence_score(pred, gt, cluster_fixations(all, bandwidth), scoring);
}

/// Keeps the initial fixation and the first k new ones.
inline Scanpath truncate(const Scanpath& s, std::size_t k) {
  Scanpath out = s;
  if (out.fixations.size() > k + 1) {
    out.fixations.resize(k + 1);
    out.terminated = false;
  }
  return out;
}

inline double truncated_score(const Scanpath& pred, const Scanpath& gt, std::size_t k,
                              double bandwidth = kDefaultBandwidth, const AlignmentScoring& scoring = {}) {
  return sequence_score(truncate(pred, k), truncate(gt, k), bandwidth, scoring);
}

/// Label-map value under each fixation (0 = background). The map may be at any resolution;
/// fixations are scaled from the grid's image frame.
inline std::vector<int> semantic_sequence(const Scanpath& s, const Raster& label_map, const ActionGrid& grid = {},
                                          int num_categories = 80) {
  if (label_map.channels != 1) throw DataError("label map must be single-channel");
  std::vector<int> out;
  out.reserve(s.size());
  const double sx = static_cast<double>(label_map.width) / grid.image_w;
  const double sy = static_cast<double>(label_map.height) / grid.image_h;
  for (const auto& f : s.fixations) {
    const int x = std::clamp(static_cast<int>(std::floor(f.x * sx)), 0, label_map.width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(f.y * sy)), 0, label_map.height - 1);
    const int v = label_map.at(x, y);
    if (v > num_categories) {
      throw DataError("label map value " + std::to_string(v) + " at (" + std::to_string(x) + "," + std::to_string(y) +
                      ") exceeds " + std::to_string(num_categories) + " categories");
    }
    out.push_back(v);
  }
  return out;
}

inline double semantic_sequence_score(const Scanpath& pred, const Scanpath& gt, const Raster& label_map,
                                      const ActionGrid& grid = {}, const AlignmentScoring& scoring = {}) {
  return nw_align(semantic_sequence(pred, label_map, grid), semantic_sequence(gt, label_map, grid), scoring);
}

/// Probabilities below this are raised to it before taking logs.
inline constexpr double kLogFloor = 1e-300;

/// log2 p_model(cell) - log2 p_baseline(cell).
inline double information_gain(std::span<const double> model, std::span<const double> baseline, int cell) {
  if (model.size() != baseline.size()) throw ContractError("information gain: map sizes differ");
  if (!(baseline[cell] > 0)) throw DataError("baseline density must be strictly positive");
  return std::log2(std::max(model[cell], kLogFloor)) - std::log2(baseline[cell]);
}

/// Z-scored map value at `cell` (population std); a constant map scores 0.
inline double normalized_scanpath_saliency(std::span<const double> map, int cell) {
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  if (*lo == *hi) return 0.0;
  const double n = static_cast<double>(map.size());
  double mean = 0;
  for (double v : map) mean += v;
  mean /= n;
  double var = 0;
  for (double v : map) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0)) return 0.0;
  return (map[cell] - mean) / sd;
}

/// One predicted length and the ground-truth lengths of every subject on that image.
struct LengthGroup {
  double predicted = 0;
  std::vector<double> observed;
};

/// Mean over images of the mean absolute length error against each subject.
inline double scanpath_length_mae(std::span<const LengthGroup> groups) {
  double total = 0;
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.observed.empty()) continue;
    double s = 0;
    for (double o : g.observed) s += std::abs(g.predicted - o);
    total += s / static_cast<double>(g.observed.size());
    ++used;
  }
  return used == 0 ? 0.0 : total / static_cast<double>(used);
}

using PairScore = std::function<double(const SearchTrial& pred, const SearchTrial& gt)>;

struct ConsistencyResult {
  double mean = 0;
  std::size_t groups = 0;
  std::vector<std::string> skipped;  // image/task groups with a single subject
};

/// Leave-one-subject-out: each subject predicts every other subject of the same image and task.
inline ConsistencyResult human_consistency(const std::vector<SearchTrial>& trials, const PairScore& score) {
  std::map<std::pair<std::string, std::string>, std::vector<const SearchTrial*>> groups;
  for (const auto& t : trials) groups[{t.image_id, t.task}].push_back(&t);
  ConsistencyResult r;
  double total = 0;
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) {
      r.skipped.push_back(key.first + "/" + key.second);
      continue;
    }
    double s = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = 0; j < members.size(); ++j) {
        if (i == j) continue;
        s += score(*members[i], *members[j]);
        ++pairs;
      }
    }
    total += s / static_cast<double>(pairs);
    ++r.groups;
  }
  r.mean = r.groups == 0 ? 0.0 : total / static_cast<double>(r.groups);
  return r;
}

}  // namespace ffm::metrics
