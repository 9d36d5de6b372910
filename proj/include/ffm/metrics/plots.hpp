#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>

#include "ffm/error.hpp"
#include "ffm/png_io.hpp"
#include "ffm/types.hpp"

namespace ffm::metrics {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void svg_path(std::ostringstream& os, const Scanpath& s, const char* color, const char* label) {
  os << "  <g class=\"" << label << "\" fill=\"none\" stroke=\"" << color << "\">\n";
  if (s.size() > 1) {
    os << "    <polyline stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s.fixations[i].x << ',' << s.fixations[i].y;
    os << "\"/>\n";
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& f = s.fixations[i];
    os << "    <circle cx=\"" << f.x << "\" cy=\"" << f.y << "\" r=\"9\" stroke-width=\"2\" fill=\"white\" "
       << "fill-opacity=\"0.6\"/>\n"
       << "    <text x=\"" << f.x << "\" y=\"" << f.y + 4 << "\" text-anchor=\"middle\" font-size=\"11\" "
       << "fill=\"" << color << "\" stroke=\"none\">" << i << "</text>\n";
  }
  os << "  </g>\n";
}

/// Predicted (red) and observed (blue) scanpaths over an optional background image.
inline std::string scanpath_svg(const Scanpath& pred, const Scanpath* gt, const ActionGrid& grid = {},
                                const std::string& image_href = {}, const std::string& title = {}) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\""
     << grid.image_w << "\" height=\"" << grid.image_h << "\" viewBox=\"0 0 " << grid.image_w << ' ' << grid.image_h
     << "\">\n";
  if (!title.empty()) os << "  <title>" << xml_escape(title) << "</title>\n";
  if (image_href.empty()) {
    os << "  <rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
  } else {
    os << "  <image xlink:href=\"" << xml_escape(image_href) << "\" width=\"" << grid.image_w << "\" height=\""
       << grid.image_h << "\"/>\n";
  }
  if (gt) svg_path(os, *gt, "#1f77b4", "observed");
  svg_path(os, pred, "#d62728", "predicted");
  os << "</svg>\n";
  return os.str();
}

/// Cell map (rows x cols) rendered at image resolution: black -> red -> yellow -> white,
/// scaled by the map maximum.
inline Raster priority_raster(std::span<const double> map, const ActionGrid& grid = {}) {
  if (map.size() != static_cast<std::size_t>(grid.size())) throw ContractError("priority map has the wrong size");
  double hi = 0;
  for (double v : map) hi = std::max(hi, v);
  Raster r;
  r.width = grid.image_w;
  r.height = grid.image_h;
  r.channels = 3;
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  const int ch = grid.image_h / grid.rows, cw = grid.image_w / grid.cols;
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const double t = hi > 0 ? map[(y / ch) * grid.cols + x / cw] / hi : 0.0;
      const double rgb[3] = {std::clamp(3 * t, 0.0, 1.0), std::clamp(3 * t - 1, 0.0, 1.0),
                             std::clamp(3 * t - 2, 0.0, 1.0)};
      for (int c = 0; c < 3; ++c) {
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(rgb[c] * 255));
      }
    }
  }
  return r;
}

}  // namespace ffm::metrics
