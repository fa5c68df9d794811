// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adws/ingest.hpp"

namespace adws {

struct SiftConfig {
  int octaves = 0;  // 0: halve the smaller side until it drops below 16
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double assumed_blur = 0.5;  // blur already present in the input
  double contrast_threshold = 0.03;
  double edge_ratio = 10.0;
  double descriptor_clip = 0.2;
  int max_keypoints = 2000;

  void validate() const;
  /// Stable FNV-1a hash over the parameter values.
  std::uint64_t hash() const;
};

struct ScaleSpace {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  int base_width = 0;
  int base_height = 0;
  /// gaussians[o] has scales_per_octave + 3 levels, dogs[o] one fewer.
  std::vector<std::vector<GrayImage>> gaussians;
  std::vector<std::vector<GrayImage>> dogs;

  int octaves() const { return static_cast<int>(gaussians.size()); }
  /// Absolute blur of gaussian level `level` relative to its own octave grid.
  double level_sigma(int level) const;
};

struct Keypoint {
  float x = 0.0f;  // image coordinates
  float y = 0.0f;
  float sigma = 0.0f;  // absolute scale in image pixels
  float orientation = 0.0f;  // radians in [0, 2pi), image axes (y down)
  float response = 0.0f;  // |DoG| at the refined extremum
  int octave = 0;
  int scale_index = 0;  // DoG layer of the refined extremum
  float scale_offset = 0.0f;  // sub-layer refinement in [-0.5, 0.5]
};

using Descriptor = std::array<float, 128>;

struct SiftFeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;

  std::size_t size() const { return descriptors.size(); }
  bool empty() const { return descriptors.empty(); }
};

int default_octave_count(int width, int height);

ScaleSpace build_scale_space(const GrayImage& image, const SiftConfig& cfg);
std::vector<Keypoint> detect_keypoints(const ScaleSpace& ss, const SiftConfig& cfg);
/// Assigns orientations (possibly duplicating keypoints) and computes one
/// 128-d descriptor per oriented keypoint. Input orientations are ignored.
SiftFeatureSet describe_keypoints(const ScaleSpace& ss, std::span<const Keypoint> keypoints,
                                  const SiftConfig& cfg);
SiftFeatureSet sift_features(const GrayImage& image, const SiftConfig& cfg = {});

/// Storage quantization: floor(v * 512) clamped to [0, 255].
std::uint8_t quantize_component(float v);
float dequantize_component(std::uint8_t q);
/// Replaces every descriptor by its quantize/dequantize image.
void quantize_descriptors(SiftFeatureSet& set);

/// Separable Gaussian blur with reflect-101 borders.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

}  // namespace adws
