// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adws {

/// 8-bit RGB image, row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

/// Per-channel normalization applied before the backbone, plus its square
/// input resolution.
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
  int input_size = 380;
};

/// Backbone input: 3 x size x size, planar (CHW).
struct ImageTensor {
  int size = 0;
  std::vector<float> data;

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * size + y) * size + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * size + y) * size + x]; }
};

/// Single channel, intensities in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

enum class Label { kNormal, kAnomalous };

struct TrainImage {
  std::string id;
  std::filesystem::path path;
};

struct TestImage {
  std::string id;
  std::filesystem::path path;
  Label label = Label::kNormal;
  std::string defect_name;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<TrainImage> train_images;
  std::vector<TestImage> test_images;
};

enum class Layout { kMvtec, kFlat };

Layout parse_layout(std::string_view name);

/// Decodes PNG or JPEG bytes into RGB. Gray sources are replicated, alpha is
/// dropped and 16-bit samples are rescaled to 8 bits.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

/// Bilinear resampling of a single float plane with half-pixel centers and
/// clamped borders.
std::vector<float> resize_plane_bilinear(std::span<const float> src, int src_w, int src_h, int dst_w,
                                         int dst_h);

Image resize_bilinear(const Image& img, int dst_w, int dst_h);

/// Bilinear resize to input_size x input_size, then (x/255 - mean) / std.
ImageTensor resize_normalize(const Image& img, const Normalization& norm);

/// ITU-R 601 luma scaled to [0, 1].
GrayImage to_grayscale(const Image& img);

DatasetIndex scan_dataset(const std::filesystem::path& root, Layout layout);

}  // namespace adws
