#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "ffm/dataset.hpp"
#include "ffm/error.hpp"
#include "ffm/tensor.hpp"
#include "ffm/types.hpp"

namespace ffm::irl {

struct Heatmaps {
  Tensor<float> maps;       // (classes, rows, cols)
  std::size_t centers = 0;  // cells equal to 1
};

/// Gaussian width in cells for an object box: max(1, r / 3), r = min(w, h) / (3 * cell).
inline double object_sigma(const BBox& b, const ActionGrid& g) {
  const double cell = std::min(g.cell_h(), g.cell_w());
  const double r = std::min(b.w, b.h) / (3.0 * cell);
  return std::max(1.0, r / 3.0);
}

/// Center-keypoint targets: 1 at the cell holding each box center, a Gaussian shoulder out to
/// 3 sigma around it, per-cell max across objects of the same category.
inline Heatmaps render_gt_heatmaps(std::span<const ObjectBox> objects, const ActionGrid& g, std::size_t num_classes) {
  Heatmaps out;
  out.maps = Tensor<float>({num_classes, static_cast<std::size_t>(g.rows), static_cast<std::size_t>(g.cols)});
  for (const auto& o : objects) {
    if (o.category < 0 || static_cast<std::size_t>(o.category) >= num_classes) {
      throw DataError("object category " + std::to_string(o.category + 1) + " outside the detection head");
    }
    const double cx = std::clamp(o.bbox.x + o.bbox.w / 2, 0.0, g.image_w - 1e-9);
    const double cy = std::clamp(o.bbox.y + o.bbox.h / 2, 0.0, g.image_h - 1e-9);
    const int row = static_cast<int>(std::floor(cy / g.cell_h()));
    const int col = static_cast<int>(std::floor(cx / g.cell_w()));
    const double sigma = object_sigma(o.bbox, g);
    const int reach = static_cast<int>(std::ceil(3 * sigma));
    for (int r = std::max(0, row - reach); r <= std::min(g.rows - 1, row + reach); ++r) {
      for (int c = std::max(0, col - reach); c <= std::min(g.cols - 1, col + reach); ++c) {
        const double d2 = static_cast<double>((r - row) * (r - row) + (c - col) * (c - col));
        const float v = (r == row && c == col) ? 1.0f : static_cast<float>(std::exp(-d2 / (2 * sigma * sigma)));
        float& cell = out.maps.at(o.category, r, c);
        cell = std::max(cell, v);
      }
    }
  }
  for (float v : out.maps.vec()) out.centers += v == 1.0f;
  return out;
}

}  // namespace ffm::irl
