#pragma once

#include <array>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "ffm/container.hpp"
#include "ffm/dataset.hpp"
#include "ffm/error.hpp"
#include "ffm/foveation.hpp"
#include "ffm/png_io.hpp"
#include "ffm/resample.hpp"
#include "ffm/tensor.hpp"

namespace ffm {

/// Five feature levels C1..C5 at strides 2, 4, 8, 16, 32 of the input image.
struct FeaturePyramid {
  std::vector<Tensor<float>> levels;

  const Tensor<float>& level(int i) const { return levels.at(static_cast<std::size_t>(i)); }
  std::array<std::size_t, fov::kLevels> channels() const {
    std::array<std::size_t, fov::kLevels> c{};
    for (int i = 0; i < fov::kLevels; ++i) c[i] = levels[i].dim(0);
    return c;
  }
};

inline std::size_t halved(std::size_t n) { return (n + 1) / 2; }

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// Separable 5-tap binomial blur (1, 4, 6, 4, 1) / 16 with reflect-101 borders.
template <typename T>
Tensor<T> blur5(const Tensor<T>& in) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int h = static_cast<int>(in.dim(1)), w = static_cast<int>(in.dim(2));
  Tensor<T> tmp(in.shape()), out(in.shape());
  for (std::size_t c = 0; c < in.dim(0); ++c) {
    const T* src = in.channel(c);
    T* t = tmp.channel(c);
    T* dst = out.channel(c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int d = -2; d <= 2; ++d) acc += k[d + 2] * src[y * w + reflect101(x + d, w)];
        t[y * w + x] = static_cast<T>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int d = -2; d <= 2; ++d) acc += k[d + 2] * t[reflect101(y + d, h) * w + x];
        dst[y * w + x] = static_cast<T>(acc);
      }
  }
  return out;
}

/// Keeps every other row and column (even indices).
template <typename T>
Tensor<T> decimate2(const Tensor<T>& in) {
  const std::size_t h = in.dim(1), w = in.dim(2), oh = halved(h), ow = halved(w);
  Tensor<T> out({in.dim(0), oh, ow});
  for (std::size_t c = 0; c < in.dim(0); ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) out.at(c, y, x) = in.at(c, 2 * y, 2 * x);
  return out;
}

inline FeaturePyramid gaussian_pyramid(const Tensor<float>& image, int levels = fov::kLevels) {
  FeaturePyramid p;
  Tensor<float> cur = image;
  for (int l = 0; l < levels; ++l) {
    cur = decimate2(blur5(cur));
    p.levels.push_back(cur);
  }
  return p;
}

/// Renders the image as seen from `fixations`: the same weight maps applied to the Gaussian
/// pyramid upsampled back to full resolution. `params.ppd` refers to the half-resolution grid.
inline Tensor<float> foveate_image(const Tensor<float>& image, std::span<const Fixation> fixations,
                                   const fov::RetinaParams& params, fov::WeightMaps* weights_out = nullptr) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto pyr = gaussian_pyramid(image);
  std::vector<Tensor<float>> up;
  for (const auto& l : pyr.levels) up.push_back(bilinear_resize(l, h, w));
  fov::RetinaParams full = params;
  full.ppd = params.ppd * static_cast<double>(w) / static_cast<double>(pyr.levels[0].dim(2));
  const fov::MapGeometry geom{static_cast<int>(h), static_cast<int>(w), static_cast<int>(h), static_cast<int>(w)};
  const auto r = fov::resolution_map(fixations, full, geom);
  auto wm = fov::weight_maps(r, full.sigma);
  auto out = fov::blend<float>(up, wm.weights);
  if (weights_out) *weights_out = std::move(wm);
  return out;
}

/// Supplies the feature pyramid of an image by id.
class PyramidSource {
 public:
  virtual ~PyramidSource() = default;
  virtual FeaturePyramid load(const std::string& image_id) const = 0;
};

/// Gaussian pyramids of PNG images in a directory (`<dir>/<stem>.png`), resized to 320x512.
class GaussianPyramidSource : public PyramidSource {
 public:
  explicit GaussianPyramidSource(std::filesystem::path dir, int image_h = kImageHeight, int image_w = kImageWidth)
      : dir_(std::move(dir)), image_h_(image_h), image_w_(image_w) {}

  std::filesystem::path path_for(const std::string& image_id) const { return dir_ / (image_stem(image_id) + ".png"); }

  FeaturePyramid load(const std::string& image_id) const override {
    const auto path = path_for(image_id);
    if (!std::filesystem::exists(path)) throw DataError("missing image " + path.string());
    auto img = read_image(path);
    if (img.dim(1) != static_cast<std::size_t>(image_h_) || img.dim(2) != static_cast<std::size_t>(image_w_)) {
      img = bilinear_resize(img, image_h_, image_w_);
    }
    return gaussian_pyramid(img);
  }

 private:
  std::filesystem::path dir_;
  int image_h_, image_w_;
};

/// Exported pyramids: `<dir>/<stem>.ffmp` holding tensors "C1".."C5".
class FfmpPyramidSource : public PyramidSource {
 public:
  explicit FfmpPyramidSource(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path_for(const std::string& image_id) const { return dir_ / (image_stem(image_id) + ".ffmp"); }

  FeaturePyramid load(const std::string& image_id) const override {
    const auto path = path_for(image_id);
    if (!std::filesystem::exists(path)) throw DataError("missing pyramid file " + path.string());
    return read_pyramid_file(path);
  }

  static FeaturePyramid read_pyramid_file(const std::filesystem::path& path) {
    const auto tensors = read_tensor_container(path);
    FeaturePyramid p;
    for (int l = 1; l <= fov::kLevels; ++l) {
      const std::string name = "C" + std::to_string(l);
      const auto* t = find_tensor(tensors, name);
      if (!t) throw DataError(path.string() + ": missing tensor " + name);
      if (t->tensor.rank() != 3) throw DataError(path.string() + ": tensor " + name + " must be (C, H, W)");
      if (!t->tensor.all_finite()) throw DataError(path.string() + ": tensor " + name + " has non-finite values");
      p.levels.push_back(t->tensor);
    }
    return p;
  }

 private:
  std::filesystem::path dir_;
};

/// In-memory pyramids keyed by image id (synthetic data, tests).
class MemoryPyramidSource : public PyramidSource {
 public:
  void add(const std::string& image_id, FeaturePyramid p) { pyramids_[image_id] = std::make_shared<FeaturePyramid>(std::move(p)); }

  FeaturePyramid load(const std::string& image_id) const override {
    auto it = pyramids_.find(image_id);
    if (it == pyramids_.end()) throw DataError("no pyramid for image " + image_id);
    return *it->second;
  }

 private:
  std::map<std::string, std::shared_ptr<FeaturePyramid>> pyramids_;
};

/// Memoizing wrapper; safe to call from several threads. With a nonzero capacity the oldest
/// entry is dropped once more than `capacity` pyramids are held.
class CachedPyramidSource : public PyramidSource {
 public:
  explicit CachedPyramidSource(std::shared_ptr<const PyramidSource> inner, std::size_t capacity = 0)
      : inner_(std::move(inner)), capacity_(capacity) {}

  FeaturePyramid load(const std::string& image_id) const override { return *get(image_id); }

  std::shared_ptr<const FeaturePyramid> get(const std::string& image_id) const {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(image_id); it != cache_.end()) return it->second;
    }
    auto p = std::make_shared<const FeaturePyramid>(inner_->load(image_id));
    std::lock_guard lock(mu_);
    auto [it, inserted] = cache_.emplace(image_id, std::move(p));
    if (inserted) {
      order_.push_back(image_id);
      if (capacity_ > 0 && order_.size() > capacity_) {
        cache_.erase(order_.front());
        order_.pop_front();
      }
    }
    return it->second;
  }

 private:
  std::shared_ptr<const PyramidSource> inner_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const FeaturePyramid>> cache_;
  mutable std::deque<std::string> order_;
};

}  // namespace ffm
