// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/backbone.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "adws/error.hpp"
#include "adws/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace adws {

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::kStub ? "stub" : "external-model";
}

BackboneMetadata parse_backbone_metadata(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelLoadError, std::string("metadata is not valid JSON: ") + e.what());
  }
  BackboneMetadata meta;
  try {
    if (!doc.contains("model_id")) throw Error(ErrorCode::kModelLoadError, "metadata lacks model_id");
    meta.model_id = doc.at("model_id").get<std::string>();

    const std::string kind = doc.value("kind", std::string("external-model"));
    if (kind == "stub") {
      meta.kind = BackboneKind::kStub;
    } else if (kind == "external-model" || kind == "onnx") {
      meta.kind = BackboneKind::kExternalModel;
    } else {
      throw Error(ErrorCode::kModelLoadError, "unknown backbone kind '" + kind + "'");
    }

    if (!doc.contains("mean") || !doc.contains("std")) {
      throw Error(ErrorCode::kModelLoadError, "metadata lacks normalization mean/std");
    }
    const auto mean = doc.at("mean").get<std::vector<float>>();
    const auto stdev = doc.at("std").get<std::vector<float>>();
    if (mean.size() != 3 || stdev.size() != 3) {
      throw Error(ErrorCode::kModelLoadError, "normalization mean/std must have 3 entries");
    }
    for (int c = 0; c < 3; ++c) {
      if (!(stdev[c] > 0.0f) || !std::isfinite(mean[c])) {
        throw Error(ErrorCode::kModelLoadError, "invalid normalization constants");
      }
      meta.normalization.mean[c] = mean[c];
      meta.normalization.std[c] = stdev[c];
    }
    meta.normalization.input_size = doc.value("input_size", 380);
    if (meta.normalization.input_size <= 0) throw Error(ErrorCode::kModelLoadError, "input_size must be > 0");

    if (doc.contains("output_shape")) {
      const auto shape = doc.at("output_shape").get<std::vector<int>>();
      if (shape.size() != 3 || shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0) {
        throw Error(ErrorCode::kModelLoadError, "output_shape must be [C,H,W] with positive entries");
      }
      meta.output_shape = {shape[0], shape[1], shape[2]};
    } else if (meta.kind == BackboneKind::kStub) {
      throw Error(ErrorCode::kModelLoadError, "stub metadata requires output_shape");
    }
    meta.seed = doc.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelLoadError, std::string("bad metadata field: ") + e.what());
  }
  return meta;
}

BackboneMetadata read_backbone_metadata(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kModelLoadError, "cannot open metadata " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_backbone_metadata(ss.str());
}

std::string backbone_metadata_json(const BackboneMetadata& meta) {
  json doc;
  doc["model_id"] = meta.model_id;
  doc["kind"] = std::string(to_string(meta.kind));
  doc["mean"] = meta.normalization.mean;
  doc["std"] = meta.normalization.std;
  doc["input_size"] = meta.normalization.input_size;
  doc["output_shape"] = {meta.output_shape.channels, meta.output_shape.height, meta.output_shape.width};
  if (meta.kind == BackboneKind::kStub) doc["seed"] = meta.seed;
  return doc.dump(2) + "\n";
}

class Backbone::Impl {
 public:
  Impl(BackboneKind kind, std::string model_id, Normalization norm, FeatureShape shape)
      : kind_(kind), model_id_(std::move(model_id)), norm_(norm), shape_(shape) {}
  virtual ~Impl() = default;

  BackboneKind kind() const { return kind_; }
  const std::string& model_id() const { return model_id_; }
  const Normalization& normalization() const { return norm_; }
  FeatureShape shape() const { return shape_; }

  virtual FeatureMap run(const ImageTensor& t) const = 0;

 protected:
  void set_shape(FeatureShape s) { shape_ = s; }

 private:
  BackboneKind kind_;
  std::string model_id_;
  Normalization norm_;
  FeatureShape shape_;
};

namespace {

class StubImpl final : public Backbone::Impl {
 public:
  StubImpl(std::uint64_t seed, FeatureShape shape, const Normalization& norm, std::string model_id)
      : Impl(BackboneKind::kStub, std::move(model_id), norm, shape),
        projection_(stub_projection(seed, shape.channels)) {}

  FeatureMap run(const ImageTensor& t) const override {
    const FeatureShape s = shape();
    const int size = t.size;
    FeatureMap fm(s);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int gy = 0; gy < s.height; ++gy) {
      const int y0 = gy * size / s.height;
      const int y1 = (gy + 1) * size / s.height;
      for (int gx = 0; gx < s.width; ++gx) {
        const int x0 = gx * size / s.width;
        const int x1 = (gx + 1) * size / s.width;
        double sum[3] = {0.0, 0.0, 0.0};
        double sum_i = 0.0;
        double sum_i2 = 0.0;
        for (int y = y0; y < y1; ++y) {
          const std::size_t row = static_cast<std::size_t>(y) * size;
          for (int x = x0; x < x1; ++x) {
            const double r = t.data[row + x];
            const double g = t.data[plane + row + x];
            const double b = t.data[2 * plane + row + x];
            sum[0] += r;
            sum[1] += g;
            sum[2] += b;
            const double intensity = (r + g + b) / 3.0;
            sum_i += intensity;
            sum_i2 += intensity * intensity;
          }
        }
        const double n = static_cast<double>(y1 - y0) * (x1 - x0);
        const double mean_i = sum_i / n;
        const double stats[4] = {sum[0] / n, sum[1] / n, sum[2] / n,
                                 std::max(0.0, sum_i2 / n - mean_i * mean_i)};
        auto out = fm.at(static_cast<std::size_t>(gy) * s.width + gx);
        for (int c = 0; c < s.channels; ++c) {
          const auto& u = projection_[c];
          out[c] = static_cast<float>(stats[0] * u[0] + stats[1] * u[1] + stats[2] * u[2] + stats[3] * u[3]);
        }
      }
    }
    return fm;
  }

 private:
  std::vector<std::array<double, 4>> projection_;
};

class OnnxImpl final : public Backbone::Impl {
 public:
  OnnxImpl(const fs::path& model_file, const BackboneMetadata& meta)
      : Impl(BackboneKind::kExternalModel, meta.model_id, meta.normalization, meta.output_shape) {
    try {
      net_ = cv::dnn::readNetFromONNX(model_file.string());
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::kModelLoadError, model_file.string() + ": " + e.what());
    }
    if (net_.empty()) throw Error(ErrorCode::kModelLoadError, "empty network in " + model_file.string());
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

    ImageTensor zero;
    zero.size = meta.normalization.input_size;
    zero.data.assign(static_cast<std::size_t>(3) * zero.size * zero.size, 0.0f);
    FeatureMap probe;
    try {
      probe = infer(zero);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kShapeMismatch) throw;
      throw Error(ErrorCode::kProbeFailure, e.what());
    }
    const FeatureShape discovered = probe.shape;
    if (meta.output_shape.channels > 0 && !(meta.output_shape == discovered)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "probe output [" + std::to_string(discovered.channels) + "," + std::to_string(discovered.height) +
                      "," + std::to_string(discovered.width) + "] differs from metadata output_shape");
    }
    set_shape(discovered);
  }

  FeatureMap run(const ImageTensor& t) const override {
    FeatureMap fm = infer(t);
    if (!(fm.shape == shape())) throw Error(ErrorCode::kInferenceError, "output shape changed between calls");
    return fm;
  }

 private:
  FeatureMap infer(const ImageTensor& t) const {
    const int dims[4] = {1, 3, t.size, t.size};
    const cv::Mat blob(4, dims, CV_32F, const_cast<float*>(t.data.data()));
    cv::Mat out;
    {
      std::lock_guard lock(mutex_);
      try {
        net_.setInput(blob, "input");
        out = net_.forward("features");
      } catch (const cv::Exception& e) {
        throw Error(ErrorCode::kInferenceError, e.what());
      }
      out = out.clone();
    }
    if (out.dims != 4 || out.size[0] != 1 || out.type() != CV_32F) {
      throw Error(ErrorCode::kShapeMismatch, "output 'features' must be float32 [1,C,H,W]");
    }
    const FeatureShape s{out.size[1], out.size[2], out.size[3]};
    FeatureMap fm(s);
    const float* src = out.ptr<float>();
    const std::size_t plane = s.locations();
    for (int c = 0; c < s.channels; ++c) {
      for (std::size_t loc = 0; loc < plane; ++loc) {
        const float v = src[c * plane + loc];
        if (!std::isfinite(v)) throw Error(ErrorCode::kInferenceError, "non-finite activation");
        fm.data[loc * s.channels + c] = v;
      }
    }
    return fm;
  }

  mutable cv::dnn::Net net_;
  mutable std::mutex mutex_;
};

}  // namespace

BackboneKind Backbone::kind() const { return impl_->kind(); }
const std::string& Backbone::model_id() const { return impl_->model_id(); }
const Normalization& Backbone::normalization() const { return impl_->normalization(); }
FeatureShape Backbone::output_shape() const { return impl_->shape(); }

FeatureMap Backbone::extract(const ImageTensor& tensor) const {
  const int size = impl_->normalization().input_size;
  if (tensor.size != size || tensor.data.size() != static_cast<std::size_t>(3) * size * size) {
    throw Error(ErrorCode::kShapeMismatch, "tensor does not match backbone input 3x" + std::to_string(size) + "x" +
                                               std::to_string(size));
  }
  return impl_->run(tensor);
}

std::vector<std::array<double, 4>> stub_projection(std::uint64_t seed, int channels) {
  Rng rng(seed);
  std::vector<std::array<double, 4>> rows(static_cast<std::size_t>(channels));
  for (auto& u : rows) {
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : u) v /= norm;
  }
  return rows;
}

Backbone make_stub_backbone(std::uint64_t seed, FeatureShape shape, const Normalization& norm, std::string model_id) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "stub shape must be positive");
  }
  if (shape.height > norm.input_size || shape.width > norm.input_size) {
    throw Error(ErrorCode::kInvalidArgument, "stub grid finer than the input");
  }
  if (model_id.empty()) {
    model_id = "stub-" + std::to_string(seed) + "-" + std::to_string(shape.channels) + "x" +
               std::to_string(shape.height) + "x" + std::to_string(shape.width);
  }
  return Backbone(std::make_shared<StubImpl>(seed, shape, norm, std::move(model_id)));
}

Backbone load_backbone(const fs::path& model_file, const fs::path& metadata_file) {
  const BackboneMetadata meta = read_backbone_metadata(metadata_file);
  if (meta.kind == BackboneKind::kStub) {
    return make_stub_backbone(meta.seed, meta.output_shape, meta.normalization, meta.model_id);
  }
  if (model_file.empty() || !fs::exists(model_file)) {
    throw Error(ErrorCode::kModelLoadError, "model file not found: " + model_file.string());
  }
  return Backbone(std::make_shared<OnnxImpl>(model_file, meta));
}

FeatureMap extract_feature_map(const Backbone& backbone, const ImageTensor& tensor) {
  return backbone.extract(tensor);
}

EmbeddingVector global_pool(const FeatureMap& fm) {
  const int channels = fm.shape.channels;
  std::vector<double> sum(static_cast<std::size_t>(channels), 0.0);
  for (std::size_t loc = 0; loc < fm.locations(); ++loc) {
    const auto v = fm.at(loc);
    for (int c = 0; c < channels; ++c) sum[c] += v[c];
  }
  double norm = 0.0;
  for (double& s : sum) {
    s /= static_cast<double>(fm.locations());
    norm += s * s;
  }
  norm = std::sqrt(norm);
  EmbeddingVector out;
  out.values.resize(sum.size());
  out.unit = norm > 0.0;
  for (std::size_t c = 0; c < sum.size(); ++c) out.values[c] = static_cast<float>(out.unit ? sum[c] / norm : 0.0);
  return out;
}

}  // namespace adws
