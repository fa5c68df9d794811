// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "adws/backbone.hpp"
#include "adws/error.hpp"
#include "adws/rng.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using adws::ErrorCode;

namespace {

adws::ImageTensor zero_tensor(int size = 380) {
  adws::ImageTensor t;
  t.size = size;
  t.data.assign(3u * size * size, 0.0f);
  return t;
}

adws::ImageTensor random_tensor(std::uint64_t seed) {
  adws::Rng rng(seed);
  adws::ImageTensor t = zero_tensor();
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

ErrorCode load_error(const fs::path& model, const fs::path& meta) {
  try {
    adws::load_backbone(model, meta);
  } catch (const adws::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::kInvalidArgument;
}

fs::path write_meta(const std::string& name, const nlohmann::json& doc) {
  const fs::path p = fixture::temp_dir("meta-" + name) / "meta.json";
  std::ofstream(p) << doc.dump();
  return p;
}

nlohmann::json tiny_meta() {
  std::ifstream in(fixture::data_dir() / "tiny_backbone.json");
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(Metadata, ParsesFields) {
  const auto meta = adws::parse_backbone_metadata(
      R"({"model_id":"m","kind":"stub","mean":[0.1,0.2,0.3],"std":[1,2,3],"output_shape":[4,2,3],"seed":9})");
  EXPECT_EQ(meta.model_id, "m");
  EXPECT_EQ(meta.kind, adws::BackboneKind::kStub);
  EXPECT_FLOAT_EQ(meta.normalization.mean[2], 0.3f);
  EXPECT_FLOAT_EQ(meta.normalization.std[1], 2.0f);
  EXPECT_EQ(meta.normalization.input_size, 380);
  EXPECT_EQ(meta.output_shape, (adws::FeatureShape{4, 2, 3}));
  EXPECT_EQ(meta.seed, 9u);
  const auto again = adws::parse_backbone_metadata(adws::backbone_metadata_json(meta));
  EXPECT_EQ(again.model_id, meta.model_id);
  EXPECT_EQ(again.output_shape, meta.output_shape);
  EXPECT_EQ(again.seed, meta.seed);
}

TEST(Metadata, MissingNormalizationIsModelLoadError) {
  auto doc = tiny_meta();
  doc.erase("std");
  EXPECT_EQ(load_error(fixture::data_dir() / "tiny_backbone.onnx", write_meta("nostd", doc)),
            ErrorCode::kModelLoadError);
  EXPECT_THROW(adws::parse_backbone_metadata("{not json"), adws::Error);
  EXPECT_THROW(adws::parse_backbone_metadata(R"({"model_id":"s","kind":"stub","mean":[0,0,0],"std":[1,1,1]})"),
               adws::Error);
}

TEST(Stub, LoadedWithoutModelFile) {
  const fs::path meta = write_meta(
      "stub", {{"model_id", "s"}, {"kind", "stub"}, {"mean", {0, 0, 0}}, {"std", {1, 1, 1}}, {"output_shape", {5, 4, 4}}});
  const adws::Backbone b = adws::load_backbone("", meta);
  EXPECT_EQ(b.kind(), adws::BackboneKind::kStub);
  EXPECT_EQ(b.output_shape(), (adws::FeatureShape{5, 4, 4}));
  EXPECT_EQ(b.model_id(), "s");
}

TEST(Stub, DeterministicAcrossInstances) {
  const auto a = adws::make_stub_backbone(3, {16, 6, 6});
  const auto b = adws::make_stub_backbone(3, {16, 6, 6});
  const auto t = random_tensor(1);
  EXPECT_EQ(a.extract(t), b.extract(t));
  EXPECT_EQ(a.extract(t), a.extract(t));
  EXPECT_NE(adws::make_stub_backbone(4, {16, 6, 6}).extract(t), a.extract(t));
}

TEST(Stub, ZeroTensorGivesZeroMap) {
  const auto fm = adws::make_stub_backbone(1, {8, 5, 5}).extract(zero_tensor());
  for (float v : fm.data) EXPECT_EQ(v, 0.0f);
}

TEST(Stub, OneHotMatchesHandComputation) {
  const adws::FeatureShape shape{6, 4, 4};
  const auto b = adws::make_stub_backbone(21, shape);
  adws::ImageTensor t = zero_tensor();
  const int px = 200;
  const int py = 17;
  t.at(1, py, px) = 1.0f;
  const adws::FeatureMap fm = b.extract(t);

  // Cell (0, 2) spans rows [0, 95) and columns [190, 285) of the 380 grid.
  const double cell = 95.0 * 95.0;
  const double mean_g = 1.0 / cell;
  const double mean_i = (1.0 / 3.0) / cell;
  const double var_i = (1.0 / 9.0) / cell - mean_i * mean_i;
  const auto u = adws::stub_projection(21, shape.channels);
  const std::size_t hot = 0 * 4 + 2;
  for (std::size_t loc = 0; loc < fm.locations(); ++loc) {
    for (int c = 0; c < shape.channels; ++c) {
      const double expect = loc == hot ? mean_g * u[c][1] + var_i * u[c][3] : 0.0;
      EXPECT_NEAR(fm.at(loc)[c], expect, 1e-9) << loc << " " << c;
    }
  }
}

TEST(Stub, ProjectionRowsAreUnit) {
  for (const auto& u : adws::stub_projection(5, 12)) {
    EXPECT_NEAR(std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]), 1.0, 1e-12);
  }
}

TEST(Stub, LocalityWithinOneCell) {
  const adws::FeatureShape shape{8, 5, 5};
  const auto b = adws::make_stub_backbone(2, shape);
  adws::ImageTensor t = random_tensor(9);
  const auto before = b.extract(t);
  // Cell (3, 1): rows [228, 304), columns [76, 152).
  for (int c = 0; c < 3; ++c) t.at(c, 250, 100) += 1.5f;
  t.at(0, 230, 80) -= 0.7f;
  const auto after = b.extract(t);
  for (std::size_t loc = 0; loc < before.locations(); ++loc) {
    const bool same = std::equal(before.at(loc).begin(), before.at(loc).end(), after.at(loc).begin());
    EXPECT_EQ(same, loc != 3 * 5 + 1) << loc;
  }
}

TEST(Stub, RejectsWrongTensorSize) {
  const auto b = adws::make_stub_backbone(1, {4, 2, 2});
  try {
    b.extract(zero_tensor(100));
    FAIL();
  } catch (const adws::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(GlobalPool, TwoLocationsAnalytic) {
  adws::FeatureMap fm({2, 2, 1});
  fm.at(0)[0] = 1.0f;
  fm.at(1)[1] = 1.0f;
  const auto e = adws::global_pool(fm);
  EXPECT_TRUE(e.unit);
  EXPECT_NEAR(e.values[0], 0.70710678f, 1e-6f);
  EXPECT_NEAR(e.values[1], 0.70710678f, 1e-6f);
}

TEST(GlobalPool, ConstantMapNormalizes) {
  adws::FeatureMap fm({3, 4, 4});
  for (std::size_t loc = 0; loc < fm.locations(); ++loc) {
    fm.at(loc)[0] = 1.0f;
    fm.at(loc)[1] = 2.0f;
    fm.at(loc)[2] = 2.0f;
  }
  const auto e = adws::global_pool(fm);
  EXPECT_NEAR(e.values[0], 1.0f / 3.0f, 1e-6f);
  EXPECT_NEAR(e.values[1], 2.0f / 3.0f, 1e-6f);
}

TEST(GlobalPool, ZeroGuard) {
  const auto e = adws::global_pool(adws::FeatureMap({4, 3, 3}));
  EXPECT_FALSE(e.unit);
  for (float v : e.values) EXPECT_EQ(v, 0.0f);
}

TEST(GlobalPool, UnitNormAndChannelPermutation) {
  adws::Rng rng(4);
  const adws::FeatureShape shape{7, 3, 5};
  adws::FeatureMap fm(shape);
  for (float& v : fm.data) v = static_cast<float>(rng.uniform(-1.0, 3.0));
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  adws::FeatureMap permuted(shape);
  for (std::size_t loc = 0; loc < fm.locations(); ++loc) {
    for (int c = 0; c < 7; ++c) permuted.at(loc)[c] = fm.at(loc)[perm[c]];
  }
  const auto a = adws::global_pool(fm);
  const auto b = adws::global_pool(permuted);
  double norm = 0.0;
  for (float v : a.values) norm += static_cast<double>(v) * v;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
  for (int c = 0; c < 7; ++c) EXPECT_NEAR(b.values[c], a.values[perm[c]], 1e-7f);
}

// --- ONNX model -------------------------------------------------------------

TEST(Onnx, LoadsAndDiscoversShape) {
  const auto b = adws::load_backbone(fixture::data_dir() / "tiny_backbone.onnx", fixture::data_dir() / "tiny_backbone.json");
  EXPECT_EQ(b.kind(), adws::BackboneKind::kExternalModel);
  EXPECT_EQ(b.model_id(), "tiny-test-backbone");
  EXPECT_EQ(b.output_shape(), (adws::FeatureShape{8, 19, 19}));
}

TEST(Onnx, MatchesReferenceOutput) {
  const auto b = adws::load_backbone(fixture::data_dir() / "tiny_backbone.onnx", fixture::data_dir() / "tiny_backbone.json");
  std::ifstream in(fixture::data_dir() / "tiny_backbone_reference.json");
  const auto ref = nlohmann::json::parse(in);
  const auto values = ref.at("values").get<std::vector<float>>();
  adws::ImageTensor t = zero_tensor();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 380; ++y) {
      for (int x = 0; x < 380; ++x) t.at(c, y, x) = static_cast<float>(std::sin(0.01 * (x + 2 * y) + c));
    }
  }
  const auto fm = adws::extract_feature_map(b, t);
  ASSERT_EQ(values.size(), fm.data.size());
  const std::size_t plane = fm.locations();
  double worst = 0.0;
  for (int c = 0; c < 8; ++c) {
    for (std::size_t loc = 0; loc < plane; ++loc) {
      worst = std::max(worst, static_cast<double>(std::abs(fm.at(loc)[c] - values[c * plane + loc])));
    }
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_EQ(adws::extract_feature_map(b, t), fm);
}

TEST(Onnx, ShapeDisagreementWithMetadata) {
  auto doc = tiny_meta();
  doc["output_shape"] = {8, 20, 19};
  EXPECT_EQ(load_error(fixture::data_dir() / "tiny_backbone.onnx", write_meta("badshape", doc)),
            ErrorCode::kShapeMismatch);
}

TEST(Onnx, ProbeFailsForWrongInputSize) {
  auto doc = tiny_meta();
  doc["input_size"] = 64;
  const ErrorCode code = load_error(fixture::data_dir() / "tiny_backbone.onnx", write_meta("badinput", doc));
  EXPECT_TRUE(code == ErrorCode::kProbeFailure || code == ErrorCode::kShapeMismatch);
}

TEST(Onnx, MissingOrCorruptModel) {
  const fs::path meta = fixture::data_dir() / "tiny_backbone.json";
  EXPECT_EQ(load_error(fixture::data_dir() / "nope.onnx", meta), ErrorCode::kModelLoadError);
  const fs::path junk = fixture::temp_dir("junk-model") / "junk.onnx";
  fixture::write_bytes(junk, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(load_error(junk, meta), ErrorCode::kModelLoadError);
}
