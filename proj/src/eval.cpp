// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include "adws/error.hpp"

namespace fs = std::filesystem;

namespace adws {

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups, then the Mann-Whitney U of the anomalous class.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::kAnomalous) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::kSingleClass, "AUROC needs both classes");
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

ConfusionMetrics confusion_metrics(std::span<const bool> predicted_anomalous, std::span<const Label> labels) {
  if (predicted_anomalous.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "verdicts and labels differ in length");
  }
  ConfusionMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == Label::kAnomalous;
    if (predicted_anomalous[i]) {
      ++(actual ? m.tp : m.fp);
    } else {
      ++(actual ? m.fn : m.tn);
    }
  }
  const std::size_t n = labels.size();
  m.accuracy = n == 0 ? 0.0 : static_cast<double>(m.tp + m.tn) / static_cast<double>(n);
  const std::size_t denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
  return m;
}

EvalReport evaluate(const FeatureDictionary& dict, const DatasetIndex& test_set, const DetectorConfig& cfg,
                    const Backbone& backbone, const EvalProgressFn& progress) {
  cfg.validate();
  EvalReport out;
  out.dataset = test_set.root.filename().string();
  if (out.dataset.empty()) out.dataset = test_set.root.parent_path().filename().string();
  out.config = cfg;

  const std::size_t total = test_set.test_images.size();
  for (std::size_t i = 0; i < total; ++i) {
    const TestImage& t = test_set.test_images[i];
    const Image img = read_image(t.path);
    AnomalyReport r;
    try {
      r = detect(dict, img, cfg, backbone, t.id);
    } catch (const Error& e) {
      throw Error(e.code(), t.path.string() + ": " + e.detail());
    }
    out.labels.push_back(t.label);
    out.reports.push_back(std::move(r));
    if (progress) progress(i + 1, total, out.reports.back());
  }

  const auto verdicts = std::make_unique<bool[]>(out.reports.size());
  std::vector<double> scores;
  std::vector<double> times;
  double saved = 0.0;
  for (std::size_t i = 0; i < out.reports.size(); ++i) {
    const AnomalyReport& r = out.reports[i];
    verdicts[i] = r.anomalous;
    scores.push_back(r.image_score);
    times.push_back(r.timings.total());
    saved += r.percent_saved;
  }
  out.confusion = confusion_metrics(std::span<const bool>(verdicts.get(), out.reports.size()), out.labels);

  const bool has_normal = std::find(out.labels.begin(), out.labels.end(), Label::kNormal) != out.labels.end();
  const bool has_anomalous = std::find(out.labels.begin(), out.labels.end(), Label::kAnomalous) != out.labels.end();
  if (has_normal && has_anomalous) out.auroc = auroc(scores, out.labels);

  if (!times.empty()) {
    const double n = static_cast<double>(times.size());
    out.time_mean = std::accumulate(times.begin(), times.end(), 0.0) / n;
    double var = 0.0;
    for (double t : times) var += (t - out.time_mean) * (t - out.time_mean);
    out.time_std = std::sqrt(var / n);
    out.pct_saved_mean = saved / n;
  }
  return out;
}

namespace {

nlohmann::json config_json(const DetectorConfig& c) {
  nlohmann::json j = {{"selector", std::string(to_string(c.selector))},
                      {"sp", c.effective_sp()},
                      {"alpha", c.alpha},
                      {"model", std::string(to_string(c.model))},
                      {"shrinkage", c.shrinkage},
                      {"nu", c.nu},
                      {"margin", c.margin},
                      {"fallback_k", c.fallback_k},
                      {"seed", c.seed},
                      {"search", c.search.mode == SearchMode::kExact ? "exact" : "approximate"},
                      {"checks", c.search.checks}};
  j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json("auto");
  return j;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

nlohmann::json to_json(const EvalReport& report, bool include_timings) {
  nlohmann::json metrics = {{"accuracy", report.confusion.accuracy},
                            {"f1", report.confusion.f1},
                            {"tp", report.confusion.tp},
                            {"fp", report.confusion.fp},
                            {"fn", report.confusion.fn},
                            {"tn", report.confusion.tn},
                            {"pct_saved_mean", report.pct_saved_mean}};
  metrics["auroc"] = report.auroc ? nlohmann::json(*report.auroc) : nlohmann::json(nullptr);
  if (include_timings) {
    metrics["time_mean"] = report.time_mean;
    metrics["time_std"] = report.time_std;
  }
  nlohmann::json images = nlohmann::json::array();
  for (std::size_t i = 0; i < report.reports.size(); ++i) {
    nlohmann::json r = to_json(report.reports[i], include_timings);
    r["label"] = report.labels[i] == Label::kAnomalous ? "anomalous" : "normal";
    images.push_back(std::move(r));
  }
  return {{"dataset", report.dataset},
          {"config", config_json(report.config)},
          {"metrics", std::move(metrics)},
          {"reports", std::move(images)}};
}

std::string csv_header() { return "dataset,model,selector,sp,accuracy,f1,auroc,pct_saved_mean,time_mean,time_std"; }

std::string csv_row(const EvalReport& r) {
  return csv_field(r.dataset) + "," + std::string(to_string(r.config.model)) + "," +
         std::string(to_string(r.config.selector)) + "," + fmt(r.config.effective_sp()) + "," +
         fmt(r.confusion.accuracy) + "," + fmt(r.confusion.f1) + "," + (r.auroc ? fmt(*r.auroc) : "NA") + "," +
         fmt(r.pct_saved_mean) + "," + fmt(r.time_mean) + "," + fmt(r.time_std);
}

void write_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << csv_header() << '\n' << csv_row(report) << '\n';
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace adws
