// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/heatmap.hpp"

#include <algorithm>
#include <cmath>

namespace adws {

const std::array<Rgb, 256>& color_ramp() {
  static const std::array<Rgb, 256> ramp = [] {
    constexpr double stops[4][3] = {{0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}};
    std::array<Rgb, 256> r{};
    for (int i = 0; i < 256; ++i) {
      const double t = i / 255.0 * 3.0;
      const int seg = std::min(2, static_cast<int>(t));
      const double f = t - seg;
      for (int c = 0; c < 3; ++c) {
        const double v = stops[seg][c] + f * (stops[seg + 1][c] - stops[seg][c]);
        r[i][c] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
    return r;
  }();
  return ramp;
}

Image render_heatmap_image(const ScoreMap& sm, const Image& img, double tau) {
  Image out = img;
  if (img.width <= 0 || img.height <= 0 || sm.values.empty()) return out;

  const auto [lo_it, hi_it] = std::minmax_element(sm.values.begin(), sm.values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<float> norm(sm.values.size(), 0.0f);
  if (range > 0.0) {
    for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = static_cast<float>((sm.values[i] - lo) / range);
  }
  const std::vector<float> up = resize_plane_bilinear(norm, sm.width, sm.height, img.width, img.height);

  const auto& ramp = color_ramp();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float v = std::clamp(up[static_cast<std::size_t>(y) * img.width + x], 0.0f, 1.0f);
      const Rgb& col = ramp[static_cast<std::size_t>(std::lround(v * 255.0f))];
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<std::uint8_t>((img.at(x, y, c) + col[c] + 1) / 2);
    }
  }

  auto paint = [&](int x, int y) {
    for (int c = 0; c < 3; ++c) out.at(x, y, c) = kOutlineColor[c];
  };
  for (int row = 0; row < sm.height; ++row) {
    for (int col = 0; col < sm.width; ++col) {
      if (!(sm.at(row, col) > tau)) continue;
      const int x0 = col * img.width / sm.width;
      const int x1 = std::max(x0 + 1, (col + 1) * img.width / sm.width) - 1;
      const int y0 = row * img.height / sm.height;
      const int y1 = std::max(y0 + 1, (row + 1) * img.height / sm.height) - 1;
      for (int x = x0; x <= x1; ++x) {
        paint(x, y0);
        paint(x, y1);
      }
      for (int y = y0; y <= y1; ++y) {
        paint(x0, y);
        paint(x1, y);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> render_heatmap(const ScoreMap& sm, const Image& img, double tau) {
  return encode_png(render_heatmap_image(sm, img, tau));
}

}  // namespace adws
