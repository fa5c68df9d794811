// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "adws/ingest.hpp"
#include "adws/normality.hpp"

namespace adws {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed 256-entry blue-cyan-yellow-red ramp; entry 0 is the zero color.
const std::array<Rgb, 256>& color_ramp();

inline constexpr Rgb kOutlineColor{255, 255, 255};

/// Min-max normalized scores, bilinearly upsampled, ramp-colored and blended
/// 50/50 over `img`. Cells scoring above `tau` get a one-pixel outline.
Image render_heatmap_image(const ScoreMap& sm, const Image& img, double tau);
std::vector<std::uint8_t> render_heatmap(const ScoreMap& sm, const Image& img, double tau);

}  // namespace adws
