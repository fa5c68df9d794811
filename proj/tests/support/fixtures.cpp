// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace fs = std::filesystem;

namespace fixture {

adws::GrayImage blob_texture(int size, std::uint64_t seed) {
  adws::Rng rng(seed);
  struct Blob {
    double x, y, s, a, c, sn, ratio;
  };
  const int count = std::max(8, size * size / 900);
  std::vector<Blob> blobs(static_cast<std::size_t>(count));
  for (Blob& b : blobs) {
    b.x = rng.uniform(0.0, size);
    b.y = rng.uniform(0.0, size);
    b.s = rng.uniform(1.5, 6.0);
    b.a = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.4);
    const double t = rng.uniform(0.0, std::numbers::pi);
    b.c = std::cos(t);
    b.sn = std::sin(t);
    b.ratio = rng.uniform(1.0, 2.5);
  }
  adws::GrayImage g(size, size, 0.5f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.5;
      for (const Blob& b : blobs) {
        const double u = ((x - b.x) * b.c + (y - b.y) * b.sn) / b.ratio;
        const double w = -(x - b.x) * b.sn + (y - b.y) * b.c;
        const double d2 = u * u + w * w;
        if (d2 < 16.0 * b.s * b.s) v += b.a * std::exp(-d2 / (2.0 * b.s * b.s));
      }
      g.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return g;
}

adws::GrayImage noise_image(int size, std::uint64_t seed) {
  adws::Rng rng(seed);
  adws::GrayImage g(size, size);
  for (float& v : g.data) v = static_cast<float>(rng.uniform());
  g = adws::gaussian_blur(g, 2.0);
  // Blurring flattens uniform noise toward 0.5; stretch it back.
  for (float& v : g.data) v = std::clamp(0.5f + 4.0f * (v - 0.5f), 0.0f, 1.0f);
  return g;
}

adws::GrayImage rotate90(const adws::GrayImage& g) {
  adws::GrayImage out(g.height, g.width);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) out.at(g.height - 1 - y, x) = g.at(x, y);
  }
  return out;
}

adws::Image to_rgb(const adws::GrayImage& g) {
  adws::Image img(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(g.at(x, y), 0.0f, 1.0f) * 255.0f));
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  }
  return img;
}

adws::Descriptor random_descriptor(adws::Rng& rng) {
  adws::Descriptor d{};
  double norm = 0.0;
  for (float& v : d) {
    v = static_cast<float>(rng.uniform());
    norm += static_cast<double>(v) * v;
  }
  for (float& v : d) v = static_cast<float>(v / std::sqrt(norm));
  return d;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("adws-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthSetup synth_setup(const std::string& name, adws::SynthParams params) {
  params.out = temp_dir(name);
  adws::SynthCorpus corpus = adws::generate_synthetic_corpus(params);
  const auto& meta = corpus.backbone;
  adws::Backbone backbone =
      adws::make_stub_backbone(meta.seed, meta.output_shape, meta.normalization, meta.model_id);
  adws::FeatureDictionary dict =
      adws::build_dictionary(adws::scan_dataset(corpus.root, adws::Layout::kMvtec), backbone, {});
  return {std::move(corpus), std::move(backbone), std::move(dict)};
}

}  // namespace fixture
