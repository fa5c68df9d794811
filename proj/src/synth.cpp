// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "adws/error.hpp"

namespace fs = std::filesystem;

namespace adws {

namespace {

constexpr int kBases[][3] = {{196, 70, 64}, {70, 180, 84}, {66, 84, 192}, {190, 176, 70},
                             {150, 90, 170}, {80, 160, 168}};
constexpr std::size_t kBaseCount = std::size(kBases);
constexpr std::size_t kBlobs = 16;

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", prefix, i);
  return buf;
}

}  // namespace

Image synth_texture(std::size_t environment, int size, Rng& rng) {
  if (size < 16) throw Error(ErrorCode::kInvalidArgument, "synthetic image size must be >= 16");
  const int* base = kBases[environment % kBaseCount];
  const double brightness = rng.uniform(-8.0, 8.0);

  // Per-environment scene: a low-frequency field and a blob layout, both
  // perturbed per image.
  Rng layout(0x9e3779b97f4a7c15ULL ^ environment);
  constexpr int kCoarse = 12;
  std::vector<float> coarse(kCoarse * kCoarse);
  for (float& v : coarse) v = static_cast<float>(0.75 * layout.uniform(-1.0, 1.0) + 0.25 * rng.uniform(-1.0, 1.0));
  const std::vector<float> field = resize_plane_bilinear(coarse, kCoarse, kCoarse, size, size);

  struct Blob {
    double x, y, s, a, c, sn, ratio;
  };
  std::vector<Blob> blobs(kBlobs);
  for (Blob& b : blobs) {
    b.x = layout.uniform(0.1, 0.9) * size + rng.uniform(-1.0, 1.0);
    b.y = layout.uniform(0.1, 0.9) * size + rng.uniform(-1.0, 1.0);
    b.s = layout.uniform(2.5, 5.0) * size / 256.0;
    b.a = (layout.uniform() < 0.5 ? -1.0 : 1.0) * layout.uniform(80.0, 110.0);
    const double theta = layout.uniform(0.0, std::numbers::pi);
    b.c = std::cos(theta);
    b.sn = std::sin(theta);
    b.ratio = layout.uniform(1.5, 3.0);
  }

  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 14.0 * field[static_cast<std::size_t>(y) * size + x] + rng.uniform(-4.0, 4.0);
      for (const Blob& b : blobs) {
        const double u = ((x - b.x) * b.c + (y - b.y) * b.sn) / b.ratio;
        const double w = -(x - b.x) * b.sn + (y - b.y) * b.c;
        const double d2 = u * u + w * w;
        if (d2 < 16.0 * b.s * b.s) v += b.a * std::exp(-d2 / (2.0 * b.s * b.s));
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(base[c] + brightness + v);
    }
  }
  return img;
}

Box insert_defect(Image& img, DefectKind kind, Rng& rng) {
  constexpr int kMargin = 8;
  const int w = img.width;
  const int h = img.height;
  if (kind == DefectKind::kSquare) {
    const int side = 20 + static_cast<int>(rng.below(17));
    const int x0 = kMargin + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, w - 2 * kMargin - side))));
    const int y0 = kMargin + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, h - 2 * kMargin - side))));
    const int level = 235 + static_cast<int>(rng.below(21));
    for (int y = y0; y < std::min(h, y0 + side); ++y) {
      for (int x = x0; x < std::min(w, x0 + side); ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(level);
      }
    }
    return {x0, y0, std::min(w, x0 + side), std::min(h, y0 + side)};
  }

  const double length = rng.uniform(50.0, 90.0);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const int thickness = 2 + static_cast<int>(rng.below(2));
  const double dx = std::cos(angle) * length;
  const double dy = std::sin(angle) * length;
  const double span_x = std::abs(dx) + thickness;
  const double span_y = std::abs(dy) + thickness;
  const double sx = rng.uniform(kMargin + std::max(0.0, -dx), std::max(kMargin + 1.0, w - kMargin - span_x + std::min(0.0, dx)));
  const double sy = rng.uniform(kMargin, std::max(kMargin + 1.0, h - kMargin - span_y));
  const int level = 15 + static_cast<int>(rng.below(26));

  Box box{w, h, 0, 0};
  const int steps = static_cast<int>(std::ceil(length * 2.0));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int cx = static_cast<int>(std::lround(sx + t * dx));
    const int cy = static_cast<int>(std::lround(sy + t * dy));
    for (int oy = 0; oy < thickness; ++oy) {
      for (int ox = 0; ox < thickness; ++ox) {
        const int x = cx + ox;
        const int y = cy + oy;
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(level);
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
    }
  }
  return box;
}

BackboneMetadata synth_stub_metadata(std::uint64_t seed) {
  BackboneMetadata meta;
  meta.kind = BackboneKind::kStub;
  meta.seed = seed;
  meta.output_shape = {32, 8, 8};
  meta.model_id = "stub-" + std::to_string(seed) + "-32x8x8";
  return meta;
}

Box cell_box(FeatureShape shape, std::size_t location, int image_width, int image_height) {
  const int row = static_cast<int>(location / static_cast<std::size_t>(shape.width));
  const int col = static_cast<int>(location % static_cast<std::size_t>(shape.width));
  return {col * image_width / shape.width, row * image_height / shape.height, (col + 1) * image_width / shape.width,
          (row + 1) * image_height / shape.height};
}

SynthCorpus generate_synthetic_corpus(const SynthParams& p) {
  if (p.out.empty()) throw Error(ErrorCode::kInvalidArgument, "synthetic corpus needs an output directory");
  if (p.train < 1) throw Error(ErrorCode::kInvalidArgument, "synthetic corpus needs at least one training image");
  if (p.environments < 1) throw Error(ErrorCode::kInvalidArgument, "environments must be >= 1");
  if (p.size < 64) throw Error(ErrorCode::kInvalidArgument, "synthetic image size must be >= 64");

  const fs::path train_dir = p.out / "train" / "good";
  const fs::path good_dir = p.out / "test" / "good";
  const fs::path square_dir = p.out / "test" / "square";
  const fs::path scratch_dir = p.out / "test" / "scratch";
  for (const auto& d : {train_dir, good_dir, square_dir, scratch_dir}) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + d.string() + ": " + ec.message());
  }

  Rng rng(p.seed);
  SynthCorpus corpus;
  corpus.root = p.out;
  for (std::size_t i = 0; i < p.train; ++i) {
    write_png(train_dir / numbered("train", i), synth_texture(i % p.environments, p.size, rng));
  }
  for (std::size_t i = 0; i < p.normals; ++i) {
    write_png(good_dir / numbered("good", i), synth_texture(i % p.environments, p.size, rng));
  }
  nlohmann::json truth = nlohmann::json::array();
  for (std::size_t i = 0; i < p.anomalies; ++i) {
    const DefectKind kind = i % 2 == 0 ? DefectKind::kSquare : DefectKind::kScratch;
    Image img = synth_texture(i % p.environments, p.size, rng);
    const Box box = insert_defect(img, kind, rng);
    const bool square = kind == DefectKind::kSquare;
    const std::string name = numbered(square ? "square" : "scratch", i);
    write_png((square ? square_dir : scratch_dir) / name, img);
    SynthDefect d{std::string("test/") + (square ? "square/" : "scratch/") + name, kind, box};
    truth.push_back({{"id", d.id},
                     {"kind", square ? "square" : "scratch"},
                     {"box", {box.x0, box.y0, box.x1, box.y1}}});
    corpus.defects.push_back(std::move(d));
  }

  corpus.backbone = synth_stub_metadata(p.seed);
  const nlohmann::json doc = {{"image_size", p.size}, {"seed", p.seed}, {"defects", std::move(truth)}};
  std::ofstream gt(p.out / "ground_truth.json");
  std::ofstream meta(p.out / "stub_backbone.json");
  if (!gt || !meta) throw Error(ErrorCode::kIo, "cannot write corpus metadata under " + p.out.string());
  gt << doc.dump(2) << '\n';
  meta << backbone_metadata_json(corpus.backbone) << '\n';
  return corpus;
}

}  // namespace adws
