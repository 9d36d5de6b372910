#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffm/error.hpp"

namespace ffm {

/// Canonical working resolution of every image, in pixels.
inline constexpr int kImageHeight = 320;
inline constexpr int kImageWidth = 512;

/// A gaze position in continuous image coordinates; pixel k spans [k, k+1).
struct Fixation {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Fixation&, const Fixation&) = default;
};

/// Axis-aligned box (x, y, w, h) in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool contains(const Fixation& f) const {
    return f.x >= x && f.x < x + w && f.y >= y && f.y < y + h;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Scanpath {
  std::vector<Fixation> fixations;  // includes the initial fixation
  bool terminated = false;          // ended by choice rather than by a length cap

  std::size_t size() const { return fixations.size(); }
  std::size_t new_fixations() const { return fixations.empty() ? 0 : fixations.size() - 1; }

  friend bool operator==(const Scanpath&, const Scanpath&) = default;
};

enum class Split { kTrain, kValid, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid" || s == "val" || s == "validation") return Split::kValid;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

/// One subject's fixation sequence on one image under one search task.
struct SearchTrial {
  std::string image_id;
  std::string task;
  int subject = 0;
  bool present = false;
  Scanpath scanpath;
  std::optional<BBox> bbox;  // only for target-present trials
  Split split = Split::kTrain;
  bool predicted = false;

  friend bool operator==(const SearchTrial&, const SearchTrial&) = default;
};

/// The 18 search targets of COCO-Search18, in the order of the fixation head's maps.
inline const std::vector<std::string>& default_tasks() {
  static const std::vector<std::string> tasks = {
      "bottle", "bowl",      "car",   "chair",  "clock",        "cup",
      "fork",   "keyboard",  "knife", "laptop", "microwave",    "mouse",
      "oven",   "potted plant", "sink", "stop sign", "toilet",  "tv"};
  return tasks;
}

/// Discretization of the image plane into rows x cols half-open cells.
struct ActionGrid {
  int rows = 20;
  int cols = 32;
  int image_h = kImageHeight;
  int image_w = kImageWidth;

  ActionGrid() = default;
  ActionGrid(int rows_, int cols_, int image_h_, int image_w_)
      : rows(rows_), cols(cols_), image_h(image_h_), image_w(image_w_) {
    if (rows <= 0 || cols <= 0 || image_h % rows != 0 || image_w % cols != 0) {
      throw std::invalid_argument("action grid " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + " does not divide image " +
                                  std::to_string(image_h) + "x" + std::to_string(image_w));
    }
  }

  int size() const { return rows * cols; }
  double cell_h() const { return static_cast<double>(image_h) / rows; }
  double cell_w() const { return static_cast<double>(image_w) / cols; }
  Fixation center() const { return {image_w / 2.0, image_h / 2.0}; }

  friend bool operator==(const ActionGrid&, const ActionGrid&) = default;
};

inline int fixation_to_action(const Fixation& f, const ActionGrid& g) {
  if (!(f.x >= 0.0 && f.x < g.image_w)) {
    throw std::out_of_range("fixation x=" + std::to_string(f.x) + " outside [0, " +
                            std::to_string(g.image_w) + ")");
  }
  if (!(f.y >= 0.0 && f.y < g.image_h)) {
    throw std::out_of_range("fixation y=" + std::to_string(f.y) + " outside [0, " +
                            std::to_string(g.image_h) + ")");
  }
  const int row = static_cast<int>(std::floor(f.y / g.cell_h()));
  const int col = static_cast<int>(std::floor(f.x / g.cell_w()));
  return row * g.cols + col;
}

inline Fixation action_to_fixation(int action, const ActionGrid& g) {
  if (action < 0 || action >= g.size()) {
    throw std::out_of_range("action index " + std::to_string(action) + " outside [0, " +
                            std::to_string(g.size()) + ")");
  }
  const int row = action / g.cols;
  const int col = action % g.cols;
  return {(col + 0.5) * g.cell_w(), (row + 0.5) * g.cell_h()};
}

}  // namespace ffm
