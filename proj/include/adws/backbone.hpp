// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adws/ingest.hpp"

namespace adws {

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t locations() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const FeatureShape&) const = default;
};

/// Grid of C-dimensional vectors. Stored location-major (H, W, C) so each
/// grid location's vector is contiguous.
struct FeatureMap {
  FeatureShape shape;
  std::vector<float> data;

  FeatureMap() = default;
  explicit FeatureMap(FeatureShape s)
      : shape(s), data(s.locations() * static_cast<std::size_t>(s.channels), 0.0f) {}

  std::size_t locations() const { return shape.locations(); }
  std::span<const float> at(std::size_t location) const {
    return {data.data() + location * shape.channels, static_cast<std::size_t>(shape.channels)};
  }
  std::span<float> at(std::size_t location) {
    return {data.data() + location * shape.channels, static_cast<std::size_t>(shape.channels)};
  }

  bool operator==(const FeatureMap&) const = default;
};

/// Pooled image embedding. `unit` is false only for the zero vector.
struct EmbeddingVector {
  std::vector<float> values;
  bool unit = false;

  bool operator==(const EmbeddingVector&) const = default;
};

enum class BackboneKind { kExternalModel, kStub };

std::string_view to_string(BackboneKind kind);

/// Contents of the backbone metadata JSON:
/// {model_id, kind, mean[3], std[3], output_shape[C,H,W], input_size?, seed?}
struct BackboneMetadata {
  std::string model_id;
  BackboneKind kind = BackboneKind::kExternalModel;
  Normalization normalization;
  FeatureShape output_shape;
  std::uint64_t seed = 0;
};

BackboneMetadata parse_backbone_metadata(std::string_view json_text);
BackboneMetadata read_backbone_metadata(const std::filesystem::path& path);
std::string backbone_metadata_json(const BackboneMetadata& meta);

/// Immutable handle to a feature extractor. Copies share the loaded network;
/// extraction is safe to call from several threads.
class Backbone {
 public:
  class Impl;

  BackboneKind kind() const;
  const std::string& model_id() const;
  const Normalization& normalization() const;
  FeatureShape output_shape() const;

  FeatureMap extract(const ImageTensor& tensor) const;

 private:
  explicit Backbone(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;

  friend Backbone load_backbone(const std::filesystem::path&, const std::filesystem::path&);
  friend Backbone make_stub_backbone(std::uint64_t, FeatureShape, const Normalization&, std::string);
};

/// Loads an ONNX model with input "input" [1,3,S,S] and output "features"
/// [1,C,H,W]. For stub metadata the model file is not read and may be empty.
Backbone load_backbone(const std::filesystem::path& model_file, const std::filesystem::path& metadata_file);

/// Deterministic test double. The input is split into an H x W grid of
/// cells; channel c of a cell is the dot product of its statistics vector
/// (mean of each tensor channel, variance of per-pixel channel mean) with a
/// seeded unit vector u_c.
Backbone make_stub_backbone(std::uint64_t seed, FeatureShape shape, const Normalization& norm = {},
                            std::string model_id = {});

/// Seeded unit vectors used by the stub, one row of 4 per channel.
std::vector<std::array<double, 4>> stub_projection(std::uint64_t seed, int channels);

FeatureMap extract_feature_map(const Backbone& backbone, const ImageTensor& tensor);

/// Per-channel mean over the grid, L2-normalized. A zero mean vector is
/// returned as-is with unit = false.
EmbeddingVector global_pool(const FeatureMap& fm);

}  // namespace adws
