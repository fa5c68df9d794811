// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "adws/error.hpp"
#include "adws/selection.hpp"
#include "adws/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using adws::ErrorCode;
using fixture::error_of;

namespace {

// Dataset of `n` synthetic textures spread over two environments.
fs::path texture_dataset(const std::string& name, std::size_t n) {
  const fs::path root = fixture::temp_dir(name);
  fs::create_directories(root / "train/good");
  adws::Rng rng(99);
  for (std::size_t i = 0; i < n; ++i) {
    adws::write_png(root / "train/good" / ("img_" + std::to_string(10 + i) + ".png"),
                    adws::synth_texture(i % 2, 96, rng));
  }
  return root;
}

const adws::Backbone& stub() {
  static const adws::Backbone b = adws::make_stub_backbone(5, {8, 4, 4});
  return b;
}

adws::SiftFeatureSet sift_of(const adws::GrayImage& g) {
  auto s = adws::sift_features(g);
  adws::quantize_descriptors(s);
  return s;
}

}  // namespace

TEST(RatioTest, Examples) {
  EXPECT_TRUE(adws::ratio_test(0.2, 0.5, 0.7));
  EXPECT_FALSE(adws::ratio_test(0.4, 0.5, 0.7));
  EXPECT_FALSE(adws::ratio_test(0.0, 0.0, 0.7));
  EXPECT_TRUE(adws::ratio_test(0.0, 0.1, 0.7));
}

TEST(Cosine, Examples) {
  const std::vector<float> v{0.3f, -1.2f, 2.0f};
  EXPECT_NEAR(adws::cosine_similarity(v, v), 1.0, 1e-12);
  EXPECT_NEAR(adws::cosine_similarity(std::vector<float>{1, 0}, std::vector<float>{0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(adws::cosine_similarity(std::vector<float>{1, 1}, std::vector<float>{1, 0}), 0.70710678, 1e-8);
  EXPECT_EQ(adws::cosine_similarity(std::vector<float>{0, 0}, std::vector<float>{1, 0}), 0.0);
  EXPECT_EQ(error_of([] { adws::cosine_similarity(std::vector<float>{1}, std::vector<float>{1, 2}); }),
            ErrorCode::kDimMismatch);
}

TEST(Cosine, ScaleInvariant) {
  adws::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> a(16), b(16), scaled(16);
    const double k = rng.uniform(0.1, 10.0);
    for (int i = 0; i < 16; ++i) {
      a[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      b[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      scaled[i] = static_cast<float>(a[i] * k);
    }
    EXPECT_NEAR(adws::cosine_similarity(scaled, b), adws::cosine_similarity(a, b), 1e-6);
  }
}

TEST(Fsp, SelfMatchIsOne) {
  const auto s = sift_of(fixture::blob_texture(200, 1));
  ASSERT_GT(s.size(), 5u);
  const auto r = adws::fsp(s, s, 0.7, {adws::SearchMode::kExact, 0});
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.good, s.size());
  EXPECT_FALSE(r.descriptor_starved);
}

TEST(Fsp, NoisePairIsLowAndMatchesOracle) {
  const auto a = sift_of(fixture::blob_texture(256, 2));
  const auto b = sift_of(fixture::noise_image(256, 3));
  ASSERT_GE(b.size(), 2u);
  const auto r = adws::fsp(a, b, 0.7, {adws::SearchMode::kExact, 0});
  EXPECT_LT(r.value, 0.2);
  EXPECT_NEAR(r.value, oracle::brute_fsp(a.descriptors, b.descriptors, 0.7), 1e-12);
}

TEST(Fsp, MonotoneInAlpha) {
  const auto a = sift_of(fixture::blob_texture(160, 4));
  const auto b = sift_of(fixture::blob_texture(160, 5));
  double prev = 0.0;
  for (double alpha = 0.3; alpha <= 1.0; alpha += 0.05) {
    const double v = adws::fsp(a, b, alpha, {adws::SearchMode::kExact, 0}).value;
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(Fsp, DescriptorStarvedIsZeroAndFlagged) {
  const auto s = sift_of(fixture::blob_texture(160, 6));
  const adws::SiftFeatureSet empty;
  const auto a = adws::fsp(empty, s, 0.7);
  EXPECT_EQ(a.value, 0.0);
  EXPECT_TRUE(a.descriptor_starved);
  adws::SiftFeatureSet one;
  one.keypoints.push_back(s.keypoints[0]);
  one.descriptors.push_back(s.descriptors[0]);
  const auto b = adws::fsp(s, one, 0.7);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_TRUE(b.descriptor_starved);
  EXPECT_TRUE(adws::fsp(s, nullptr, 0.7).descriptor_starved);
}

TEST(SelectFromScores, ThresholdRule) {
  const auto r = adws::select_from_scores({0.9, 0.8, 0.3}, 0.75, 5);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
  EXPECT_FALSE(r.fallback_used);
}

TEST(SelectFromScores, FallbackRule) {
  const auto r = adws::select_from_scores({0.5, 0.2, 0.9}, 0.99, 5);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(r.fallback_used);
  const auto top = adws::select_from_scores({0.5, 0.2, 0.9, 0.1, 0.6}, 0.99, 2);
  EXPECT_EQ(top.selected, (std::vector<std::size_t>{2, 4}));
}

TEST(SelectFromScores, AntitoneInSp) {
  adws::Rng rng(8);
  std::vector<double> scores(40);
  for (double& s : scores) s = rng.uniform();
  std::size_t prev = scores.size() + 1;
  for (double sp = 0.05; sp < 1.0; sp += 0.05) {
    const auto r = adws::select_from_scores(scores, sp, 5);
    ASSERT_FALSE(r.selected.empty());
    if (r.fallback_used) break;
    EXPECT_LE(r.selected.size(), prev);
    for (auto i : r.selected) EXPECT_GE(scores[i], sp);
    prev = r.selected.size();
  }
}

TEST(Selector, NamesAndDefaults) {
  EXPECT_EQ(adws::parse_selector("cosine"), adws::Selector::kCosine);
  EXPECT_EQ(adws::parse_selector("sift-flann"), adws::Selector::kSiftFlann);
  EXPECT_EQ(adws::to_string(adws::Selector::kSiftFlann), "sift-flann");
  EXPECT_THROW(adws::parse_selector("orb"), adws::Error);
  EXPECT_DOUBLE_EQ(adws::default_sp(adws::Selector::kCosine), 0.75);
  EXPECT_DOUBLE_EQ(adws::default_sp(adws::Selector::kSiftFlann), 0.70);
}

TEST(PercentSaved, Formula) {
  EXPECT_DOUBLE_EQ(adws::percent_data_saved(5, 200), 97.5);
  EXPECT_DOUBLE_EQ(adws::percent_data_saved(10, 10), 0.0);
}

TEST(Dictionary, BuildTwoImages) {
  const fs::path root = texture_dataset("dict-two", 2);
  const auto idx = adws::scan_dataset(root, adws::Layout::kMvtec);
  const auto a = adws::build_dictionary(idx, stub(), {});
  const auto b = adws::build_dictionary(idx, stub(), {});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a.entry(0).image_id, "train/good/img_10.png");
  EXPECT_EQ(a.entry(1).image_id, "train/good/img_11.png");
  EXPECT_TRUE(adws::equivalent(a, b));
  EXPECT_EQ(a.model_id(), stub().model_id());
  EXPECT_EQ(a.feature_shape(), (adws::FeatureShape{8, 4, 4}));
  for (const auto& e : a.entries()) {
    for (const auto& d : e.sift.descriptors) {
      for (float v : d) EXPECT_EQ(adws::dequantize_component(adws::quantize_component(v)), v);
    }
  }
}

TEST(Dictionary, RoundTripAndManifest) {
  const fs::path root = texture_dataset("dict-ten", 10);
  const auto dict = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
  const fs::path file = root / "dict.fd";
  adws::save_dictionary(dict, file);
  const auto loaded = adws::load_dictionary(file);
  EXPECT_TRUE(adws::equivalent(dict, loaded));
  EXPECT_EQ(adws::serialize_dictionary(loaded), adws::serialize_dictionary(dict));

  std::ifstream in(file.string() + ".json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest.at("model_id"), dict.model_id());
  ASSERT_EQ(manifest.at("entries").size(), 10u);
  EXPECT_EQ(manifest.at("entries")[3].at("id"), dict.entry(3).image_id);
}

TEST(Dictionary, BackboneTagIsChecked) {
  const fs::path root = texture_dataset("dict-tag", 2);
  const auto dict = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
  const fs::path file = root / "dict.fd";
  adws::save_dictionary(dict, file);
  EXPECT_NO_THROW(adws::load_dictionary(file, stub().model_id()));
  EXPECT_EQ(error_of([&] { adws::load_dictionary(file, "other-model"); }), ErrorCode::kBackboneMismatch);
  adws::SiftConfig other;
  other.edge_ratio = 12.0;
  EXPECT_EQ(error_of([&] { dict.check_compatible(dict.model_id(), other.hash()); }), ErrorCode::kBackboneMismatch);

  const auto rebuilt = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec),
                                              adws::make_stub_backbone(6, {8, 4, 4}), {});
  EXPECT_NE(rebuilt.model_id(), dict.model_id());
}

TEST(Dictionary, CorruptFilesAreRejected) {
  const fs::path root = texture_dataset("dict-corrupt", 2);
  const auto dict = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
  auto bytes = adws::serialize_dictionary(dict);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  EXPECT_EQ(error_of([&] { adws::deserialize_dictionary(truncated); }), ErrorCode::kDictionaryFormat);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_of([&] { adws::deserialize_dictionary(bad_magic); }), ErrorCode::kDictionaryFormat);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(error_of([&] { adws::deserialize_dictionary(bad_version); }), ErrorCode::kDictionaryFormat);
}

TEST(Dictionary, InvariantsOnConstruction) {
  adws::DictionaryEntry a;
  a.image_id = "a";
  a.feature_map = adws::FeatureMap({2, 2, 2});
  a.pooled = adws::global_pool(a.feature_map);
  adws::DictionaryEntry b = a;
  EXPECT_EQ(error_of([&] { adws::FeatureDictionary("m", 1, {a, b}); }), ErrorCode::kDictionaryFormat);
  b.image_id = "b";
  b.feature_map = adws::FeatureMap({2, 3, 2});
  EXPECT_EQ(error_of([&] { adws::FeatureDictionary("m", 1, {a, b}); }), ErrorCode::kDictionaryFormat);
}

TEST(Dictionary, EmptyTrainingSet) {
  adws::DatasetIndex idx;
  EXPECT_EQ(error_of([&] { adws::build_dictionary(idx, stub(), {}); }), ErrorCode::kEmptyTrainingSet);
}

TEST(Dictionary, DecodeErrorsNameThePath) {
  const fs::path root = texture_dataset("dict-bad-image", 1);
  fixture::write_bytes(root / "train/good/broken.png", {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 0, 0});
  try {
    adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
    FAIL();
  } catch (const adws::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedImage);
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos);
  }
}

TEST(SelectSubset, CosinePicksSameEnvironment) {
  const fs::path root = texture_dataset("select-env", 8);
  const auto dict = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
  adws::Rng rng(1234);
  const adws::Image test = adws::synth_texture(0, 96, rng);
  const auto pooled = adws::global_pool(stub().extract(adws::resize_normalize(test, stub().normalization())));
  adws::SelectionParams p;
  p.sp = 0.9;
  const auto r = adws::select_subset(dict, pooled, nullptr, p);
  EXPECT_FALSE(r.fallback_used);
  ASSERT_EQ(r.scores.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_GE(r.scores[i], 0.0);
    EXPECT_LE(r.scores[i], 1.0);
  }
  for (auto i : r.selected) EXPECT_EQ(i % 2, 0u) << i;
  EXPECT_EQ(r.selected_ids(dict).size(), r.selected.size());

  p.sp = 1.0;
  EXPECT_EQ(error_of([&] { adws::select_subset(dict, pooled, nullptr, p); }), ErrorCode::kInvalidArgument);
}

TEST(SelectSubset, SiftFlannScoresMatchFsp) {
  const fs::path root = texture_dataset("select-sift", 4);
  const auto dict = adws::build_dictionary(adws::scan_dataset(root, adws::Layout::kMvtec), stub(), {});
  const auto test_sift = dict.entry(1).sift;
  adws::SelectionParams p;
  p.selector = adws::Selector::kSiftFlann;
  p.sp = 0.7;
  p.search = {adws::SearchMode::kExact, 0};
  const auto r = adws::select_subset(dict, {}, &test_sift, p);
  EXPECT_EQ(r.scores[1], 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.scores[i], oracle::brute_fsp(test_sift.descriptors, dict.entry(i).sift.descriptors, 0.7), 1e-12);
  }
  EXPECT_EQ(error_of([&] { adws::select_subset(dict, {}, nullptr, p); }), ErrorCode::kInvalidArgument);
}
