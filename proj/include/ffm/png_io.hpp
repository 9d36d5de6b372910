#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/tensor.hpp"

namespace ffm {

/// 8-bit interleaved raster (channels = 1 gray or 3 RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

inline Raster read_png(const std::filesystem::path& path, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(img.width);
  r.height = static_cast<int>(img.height);
  r.channels = channels;
  r.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return r;
}

inline void write_png(const std::filesystem::path& path, const Raster& r) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, r.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

/// RGB raster -> (3, H, W) tensor with values in [0, 1].
inline Tensor<float> raster_to_tensor(const Raster& r) {
  Tensor<float> t({static_cast<std::size_t>(r.channels), static_cast<std::size_t>(r.height),
                   static_cast<std::size_t>(r.width)});
  for (int c = 0; c < r.channels; ++c)
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) t.at(c, y, x) = r.at(x, y, c) / 255.0f;
  return t;
}

inline Raster tensor_to_raster(const Tensor<float>& t) {
  Raster r;
  r.channels = static_cast<int>(t.dim(0));
  r.height = static_cast<int>(t.dim(1));
  r.width = static_cast<int>(t.dim(2));
  r.pixels.resize(t.size());
  for (int c = 0; c < r.channels; ++c)
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        const float v = std::clamp(t.at(c, y, x), 0.0f, 1.0f);
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return r;
}

inline Tensor<float> read_image(const std::filesystem::path& path) { return raster_to_tensor(read_png(path, 3)); }

/// Segmentation label map: 0 = background, k in [1, 80] = thing category k.
inline Raster read_label_map(const std::filesystem::path& path) { return read_png(path, 1); }

}  // namespace ffm
