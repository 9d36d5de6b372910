#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/types.hpp"

namespace ffm::metrics {

inline constexpr double kDefaultBandwidth = 64.0;

struct ClusterModel {
  std::vector<Fixation> centers;
  double bandwidth = kDefaultBandwidth;

  /// Nearest center; ties go to the earlier center.
  int assign(const Fixation& f) const {
    int best = 0;
    double best_d = std::hypot(f.x - centers[0].x, f.y - centers[0].y);
    for (std::size_t k = 1; k < centers.size(); ++k) {
      const double d = std::hypot(f.x - centers[k].x, f.y - centers[k].y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  }

  std::vector<int> labels(std::span<const Fixation> fixations) const {
    std::vector<int> out;
    out.reserve(fixations.size());
    for (const auto& f : fixations) out.push_back(assign(f));
    return out;
  }
};

/// Mean-shift with a flat disc kernel. Every fixation seeds one mode; modes closer than
/// bandwidth/2 to an earlier kept mode are merged into it.
inline ClusterModel cluster_fixations(std::span<const Fixation> points, double bandwidth = kDefaultBandwidth,
                                      double tolerance = 0.1, int max_iterations = 100) {
  if (points.empty()) throw DataError("cannot cluster an empty fixation set");
  if (!(bandwidth > 0)) throw UsageError("cluster bandwidth must be positive");
  ClusterModel model;
  model.bandwidth = bandwidth;
  for (const auto& seed : points) {
    Fixation m = seed;
    for (int it = 0; it < max_iterations; ++it) {
      double sx = 0, sy = 0;
      int count = 0;
      for (const auto& p : points) {
        if (std::hypot(p.x - m.x, p.y - m.y) <= bandwidth) {
          sx += p.x;
          sy += p.y;
          ++count;
        }
      }
      if (count == 0) break;
      const Fixation next{sx / count, sy / count};
      const double shift = std::hypot(next.x - m.x, next.y - m.y);
      m = next;
      if (shift < tolerance) break;
    }
    bool merged = false;
    for (const auto& c : model.centers) {
      if (std::hypot(c.x - m.x, c.y - m.y) < bandwidth / 2) {
        merged = true;
        break;
      }
    }
    if (!merged) model.centers.push_back(m);
  }
  return model;
}

}  // namespace ffm::metrics
