// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/pipeline.hpp"

#include <chrono>

#include "adws/error.hpp"

namespace adws {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

SelectionParams DetectorConfig::selection_params() const {
  SelectionParams p;
  p.selector = selector;
  p.sp = effective_sp();
  p.alpha = alpha;
  p.fallback_k = fallback_k;
  p.search = search;
  return p;
}

void DetectorConfig::validate() const {
  const double s = effective_sp();
  if (!(s > 0.0 && s < 1.0)) throw Error(ErrorCode::kInvalidArgument, "sp must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "shrinkage must lie in [0, 1]");
  if (!(nu > 0.0 && nu <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "nu must lie in (0, 1]");
  if (gamma && !(*gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0");
  if (!(margin >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "margin must be >= 1");
  if (fallback_k < 1) throw Error(ErrorCode::kInvalidArgument, "fallback_k must be >= 1");
  if (!(ocsvm_tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ocsvm tolerance must be > 0");
  if (ocsvm_cap < 2) throw Error(ErrorCode::kInvalidArgument, "ocsvm cap must be >= 2");
  if (search.checks < 1) throw Error(ErrorCode::kInvalidArgument, "checks must be >= 1");
  sift.validate();
}

TestFeatures extract_test_features(const Image& img, const Backbone& backbone, const DetectorConfig& cfg) {
  TestFeatures tf;
  tf.feature_map = backbone.extract(resize_normalize(img, backbone.normalization()));
  tf.pooled = global_pool(tf.feature_map);
  if (cfg.selector == Selector::kSiftFlann) {
    tf.sift = sift_features(to_grayscale(img), cfg.sift);
    quantize_descriptors(*tf.sift);
  }
  return tf;
}

OnlineModel fit_online(const FeatureDictionary& dict, const SelectionResult& selection, const DetectorConfig& cfg) {
  if (selection.selected.empty()) throw Error(ErrorCode::kEmptyTraining, "no training images selected");
  std::vector<const FeatureMap*> maps;
  maps.reserve(selection.selected.size());
  for (std::size_t i : selection.selected) maps.push_back(&dict.entry(i).feature_map);
  const Matrix rows = stack_locations(maps);

  NormalityModel model;
  if (cfg.model == ModelKind::kMvg) {
    model = fit_mvg(rows, cfg.shrinkage);
  } else {
    OcsvmParams p;
    p.nu = cfg.nu;
    p.gamma = cfg.gamma;
    p.tol = cfg.ocsvm_tol;
    p.cap = cfg.ocsvm_cap;
    p.seed = cfg.seed;
    model = fit_ocsvm(rows, p);
  }
  const Threshold t = adaptive_threshold(model, maps, cfg.margin);
  return {std::move(model), t};
}

AnomalyReport detect(const FeatureDictionary& dict, const Image& img, const DetectorConfig& cfg,
                     const Backbone& backbone, std::string image_id) {
  cfg.validate();
  dict.check_compatible(backbone.model_id(), cfg.sift.hash());

  AnomalyReport r;
  r.image_id = std::move(image_id);
  r.selector = cfg.selector;
  r.sp = cfg.effective_sp();
  r.model = cfg.model;

  auto start = Clock::now();
  const TestFeatures tf = extract_test_features(img, backbone, cfg);
  const SelectionResult sel =
      select_subset(dict, tf.pooled, tf.sift ? &*tf.sift : nullptr, cfg.selection_params());
  r.timings.select = seconds_since(start);

  start = Clock::now();
  const OnlineModel online = fit_online(dict, sel, cfg);
  r.timings.fit = seconds_since(start);

  start = Clock::now();
  r.score_map = score_map(online.model, tf.feature_map);
  r.timings.score = seconds_since(start);

  for (std::size_t i : sel.selected) r.selected.push_back({dict.entry(i).image_id, sel.scores[i]});
  r.fallback_used = sel.fallback_used;
  r.percent_saved = percent_data_saved(sel.selected.size(), dict.size());
  r.tau = online.threshold.tau;
  r.image_score = r.score_map.image_score;
  r.anomalous = r.image_score > r.tau;
  return r;
}

nlohmann::json to_json(const AnomalyReport& report, bool include_timings) {
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& s : report.selected) selected.push_back({{"id", s.id}, {"score", s.score}});
  nlohmann::json j = {{"image_id", report.image_id},
                      {"selector", std::string(to_string(report.selector))},
                      {"sp", report.sp},
                      {"model", std::string(to_string(report.model))},
                      {"selected", std::move(selected)},
                      {"fallback_used", report.fallback_used},
                      {"percent_saved", report.percent_saved},
                      {"tau", report.tau},
                      {"image_score", report.image_score},
                      {"verdict", report.anomalous ? "anomalous" : "normal"}};
  if (include_timings) {
    j["timings"] = {{"select", report.timings.select}, {"fit", report.timings.fit}, {"score", report.timings.score}};
  }
  return j;
}

}  // namespace adws
