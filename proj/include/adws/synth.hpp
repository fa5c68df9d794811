// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adws/backbone.hpp"
#include "adws/ingest.hpp"
#include "adws/rng.hpp"

namespace adws {

/// Pixel box [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool intersects(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
};

enum class DefectKind { kSquare, kScratch };

struct SynthParams {
  std::filesystem::path out;
  std::size_t train = 60;
  std::size_t normals = 40;
  std::size_t anomalies = 40;
  std::size_t environments = 4;
  int size = 256;
  std::uint64_t seed = 0;
};

struct SynthDefect {
  std::string id;  // test image id, as produced by scan_dataset
  DefectKind kind = DefectKind::kSquare;
  Box box;
};

struct SynthCorpus {
  std::filesystem::path root;
  std::vector<SynthDefect> defects;
  BackboneMetadata backbone;  // stub metadata written next to the images
};

/// Normal texture of one environment: smoothed noise around a base color.
Image synth_texture(std::size_t environment, int size, Rng& rng);
/// Paints a defect in place and returns its bounding box.
Box insert_defect(Image& img, DefectKind kind, Rng& rng);

/// Writes an mvtec-layout corpus (train/good, test/good, test/square,
/// test/scratch), ground_truth.json and stub_backbone.json.
SynthCorpus generate_synthetic_corpus(const SynthParams& params);

BackboneMetadata synth_stub_metadata(std::uint64_t seed);

/// Grid cells of `shape` (in image coordinates of a w x h image).
Box cell_box(FeatureShape shape, std::size_t location, int image_width, int image_height);

}  // namespace adws
