// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adws/pipeline.hpp"

namespace adws {

/// Mann-Whitney AUROC, anomalous is the positive class, ties count 1/2.
double auroc(std::span<const double> scores, std::span<const Label> labels);

struct ConfusionMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

ConfusionMetrics confusion_metrics(std::span<const bool> predicted_anomalous, std::span<const Label> labels);

struct EvalReport {
  std::string dataset;
  DetectorConfig config;
  std::vector<AnomalyReport> reports;
  std::vector<Label> labels;
  ConfusionMetrics confusion;
  std::optional<double> auroc;
  double time_mean = 0.0;
  double time_std = 0.0;  // population standard deviation
  double pct_saved_mean = 0.0;
};

using EvalProgressFn = std::function<void(std::size_t done, std::size_t total, const AnomalyReport&)>;

EvalReport evaluate(const FeatureDictionary& dict, const DatasetIndex& test_set, const DetectorConfig& cfg,
                    const Backbone& backbone, const EvalProgressFn& progress = {});

nlohmann::json to_json(const EvalReport& report, bool include_timings = true);

std::string csv_header();
std::string csv_row(const EvalReport& report);
void write_csv(const std::filesystem::path& path, const EvalReport& report);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace adws
