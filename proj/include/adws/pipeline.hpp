// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adws/backbone.hpp"
#include "adws/ingest.hpp"
#include "adws/normality.hpp"
#include "adws/selection.hpp"
#include "adws/sift.hpp"

namespace adws {

struct DetectorConfig {
  Selector selector = Selector::kCosine;
  std::optional<double> sp;  // defaults per selector
  double alpha = 0.7;
  ModelKind model = ModelKind::kMvg;
  double shrinkage = 0.01;
  double nu = 0.05;
  std::optional<double> gamma;
  double margin = 1.0;
  std::size_t fallback_k = 5;
  std::uint64_t seed = 0;
  double ocsvm_tol = 1e-4;
  std::size_t ocsvm_cap = 20000;
  SearchParams search{SearchMode::kApproximate, 64};
  SiftConfig sift;

  double effective_sp() const { return sp ? *sp : default_sp(selector); }
  SelectionParams selection_params() const;
  void validate() const;
};

/// Wall time per stage in seconds. Selection includes extracting the test
/// image's features; fit includes the adaptive threshold.
struct StageTimings {
  double select = 0.0;
  double fit = 0.0;
  double score = 0.0;

  double total() const { return select + fit + score; }
};

struct SelectedImage {
  std::string id;
  double score = 0.0;
};

struct AnomalyReport {
  std::string image_id;
  Selector selector = Selector::kCosine;
  double sp = 0.0;
  ModelKind model = ModelKind::kMvg;
  std::vector<SelectedImage> selected;
  bool fallback_used = false;
  double percent_saved = 0.0;
  double tau = 0.0;
  double image_score = 0.0;
  bool anomalous = false;
  ScoreMap score_map;
  StageTimings timings;
};

/// Features of the image under test.
struct TestFeatures {
  FeatureMap feature_map;
  EmbeddingVector pooled;
  std::optional<SiftFeatureSet> sift;  // only computed for the SIFT-FLANN selector
};

TestFeatures extract_test_features(const Image& img, const Backbone& backbone, const DetectorConfig& cfg);

/// Normality model fitted to a selected subset, with its threshold.
struct OnlineModel {
  NormalityModel model;
  Threshold threshold;
};

OnlineModel fit_online(const FeatureDictionary& dict, const SelectionResult& selection, const DetectorConfig& cfg);

/// Selection, online fit, adaptive threshold and scoring for one image.
AnomalyReport detect(const FeatureDictionary& dict, const Image& img, const DetectorConfig& cfg,
                     const Backbone& backbone, std::string image_id = {});

nlohmann::json to_json(const AnomalyReport& report, bool include_timings = true);

}  // namespace adws
