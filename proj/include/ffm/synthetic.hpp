#pragma once

// Small scripted search dataset: colored discs on a dark background, and an expert that visits
// them in a fixed color order that depends on the task.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ffm/dataset.hpp"
#include "ffm/nn/params.hpp"
#include "ffm/pyramid.hpp"
#include "ffm/types.hpp"

namespace ffm::synthetic {

struct ToyOptions {
  int images = 3;
  double radius = 20.0;           // disc radius in pixels
  double min_separation = 100.0;  // between disc centers
  double min_center_distance = 64.0;
  std::uint64_t seed = 1;
};

struct ToyImage {
  std::string image_id;
  Tensor<float> pixels;              // (3, 320, 512)
  std::array<Fixation, 3> discs;     // red, green, blue
};

struct ToyDataset {
  std::vector<ToyImage> images;
  std::vector<SearchTrial> trials;
  ObjectTable objects;
  std::vector<std::string> tasks{"red-first", "blue-first"};
};

/// Visiting order of the three discs for a task index.
inline std::array<int, 3> toy_order(int task) {
  return task == 0 ? std::array<int, 3>{0, 1, 2} : std::array<int, 3>{2, 1, 0};
}

inline ToyDataset make_toy_dataset(const ToyOptions& opt = {}) {
  const ActionGrid grid;
  std::mt19937_64 rng(opt.seed);
  ToyDataset ds;
  const Fixation center = grid.center();
  const int margin = static_cast<int>(std::ceil(opt.radius / grid.cell_w())) + 1;
  for (int k = 0; k < opt.images; ++k) {
    ToyImage img;
    img.image_id = "toy_" + std::to_string(k) + ".png";
    for (int d = 0; d < 3;) {
      const int row = margin + static_cast<int>(nn::uniform01(rng) * (grid.rows - 2 * margin));
      const int col = margin + static_cast<int>(nn::uniform01(rng) * (grid.cols - 2 * margin));
      const Fixation f = action_to_fixation(row * grid.cols + col, grid);
      bool ok = std::hypot(f.x - center.x, f.y - center.y) >= opt.min_center_distance;
      for (int e = 0; e < d && ok; ++e) {
        ok = std::hypot(f.x - img.discs[e].x, f.y - img.discs[e].y) >= opt.min_separation;
      }
      if (ok) img.discs[d++] = f;
    }
    img.pixels = Tensor<float>({3, static_cast<std::size_t>(grid.image_h), static_cast<std::size_t>(grid.image_w)},
                               0.15f);
    for (int d = 0; d < 3; ++d) {
      const auto& f = img.discs[d];
      for (int y = 0; y < grid.image_h; ++y) {
        for (int x = 0; x < grid.image_w; ++x) {
          if (std::hypot(x + 0.5 - f.x, y + 0.5 - f.y) > opt.radius) continue;
          for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = c == d ? 1.0f : 0.1f;
        }
      }
      ds.objects[img.image_id].push_back(
          {d, BBox{f.x - opt.radius, f.y - opt.radius, 2 * opt.radius, 2 * opt.radius}});
    }
    for (int task = 0; task < 2; ++task) {
      SearchTrial t;
      t.image_id = img.image_id;
      t.task = ds.tasks[task];
      t.subject = 0;
      t.present = false;
      t.scanpath.fixations.push_back(center);
      for (int d : toy_order(task)) t.scanpath.fixations.push_back(img.discs[d]);
      t.scanpath.terminated = true;
      ds.trials.push_back(std::move(t));
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

inline std::shared_ptr<MemoryPyramidSource> toy_pyramids(const ToyDataset& ds) {
  auto src = std::make_shared<MemoryPyramidSource>();
  for (const auto& img : ds.images) src->add(img.image_id, gaussian_pyramid(img.pixels));
  return src;
}

}  // namespace ffm::synthetic
