// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "adws/eval.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using adws::ErrorCode;
using adws::Label;
using fixture::error_of;

namespace {

constexpr Label N = Label::kNormal;
constexpr Label A = Label::kAnomalous;

}  // namespace

TEST(Auroc, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<Label> l{N, N, A, A};
  EXPECT_DOUBLE_EQ(adws::auroc(s, l), 0.75);
  const std::vector<double> perfect{0.1, 0.2, 0.9};
  EXPECT_DOUBLE_EQ(adws::auroc(perfect, std::vector<Label>{N, N, A}), 1.0);
  EXPECT_DOUBLE_EQ(adws::auroc(perfect, std::vector<Label>{A, N, N}), 0.0);
  const std::vector<double> ties(6, 2.0);
  EXPECT_DOUBLE_EQ(adws::auroc(ties, std::vector<Label>{N, A, N, A, A, N}), 0.5);
}

TEST(Auroc, MatchesPairwiseOracle) {
  adws::Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng.below(60);
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8));  // many ties
      l[i] = i < 2 ? (i == 0 ? N : A) : (rng.uniform() < 0.4 ? A : N);
    }
    EXPECT_NEAR(adws::auroc(s, l), oracle::brute_auroc(s, l), 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneMaps) {
  adws::Rng rng(18);
  std::vector<double> s(40), t(40);
  std::vector<Label> l(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = rng.uniform(-2.0, 2.0);
    t[i] = std::exp(3.0 * s[i]) + 1.0;
    l[i] = i % 3 == 0 ? A : N;
  }
  EXPECT_DOUBLE_EQ(adws::auroc(s, l), adws::auroc(t, l));
}

TEST(Auroc, Errors) {
  EXPECT_EQ(error_of([] { adws::auroc(std::vector<double>{1, 2}, std::vector<Label>{N}); }),
            ErrorCode::kLengthMismatch);
  EXPECT_EQ(error_of([] { adws::auroc(std::vector<double>{1, 2}, std::vector<Label>{N, N}); }),
            ErrorCode::kSingleClass);
}

TEST(Confusion, Examples) {
  const bool v[] = {true, true, false, false};
  const auto m = adws::confusion_metrics(v, std::vector<Label>{A, N, A, N});
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 1u);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);

  const bool none[] = {false, false};
  const auto z = adws::confusion_metrics(none, std::vector<Label>{N, N});
  EXPECT_DOUBLE_EQ(z.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(z.f1, 0.0);

  const bool w[] = {true, true, true};
  const auto k = adws::confusion_metrics(w, std::vector<Label>{A, A, N});
  EXPECT_DOUBLE_EQ(k.f1, 0.8);
  EXPECT_EQ(error_of([&] { adws::confusion_metrics(w, std::vector<Label>{A}); }), ErrorCode::kLengthMismatch);
}

namespace {

const fixture::SynthSetup& setup() {
  static const fixture::SynthSetup s = [] {
    adws::SynthParams p;
    p.train = 8;
    p.normals = 4;
    p.anomalies = 4;
    p.environments = 2;
    p.size = 192;
    p.seed = 11;
    return fixture::synth_setup("eval", p);
  }();
  return s;
}

}  // namespace

TEST(Evaluate, ReportsEveryTestImage) {
  const auto& s = setup();
  const auto idx = adws::scan_dataset(s.corpus.root, adws::Layout::kMvtec);
  std::size_t calls = 0;
  const auto rep = adws::evaluate(s.dict, idx, {}, s.backbone,
                                  [&](std::size_t done, std::size_t total, const adws::AnomalyReport&) {
                                    EXPECT_EQ(done, ++calls);
                                    EXPECT_EQ(total, 8u);
                                  });
  ASSERT_EQ(rep.reports.size(), 8u);
  EXPECT_EQ(calls, 8u);
  EXPECT_EQ(rep.dataset, "adws-test-eval");
  std::size_t anomalous = 0;
  std::vector<double> scores;
  for (std::size_t i = 0; i < rep.reports.size(); ++i) {
    EXPECT_EQ(rep.reports[i].image_id, idx.test_images[i].id);
    anomalous += rep.labels[i] == A;
    scores.push_back(rep.reports[i].image_score);
  }
  EXPECT_EQ(anomalous, 4u);
  ASSERT_TRUE(rep.auroc.has_value());
  EXPECT_NEAR(*rep.auroc, oracle::brute_auroc(scores, rep.labels), 1e-12);
  EXPECT_EQ(rep.confusion.tp + rep.confusion.fp + rep.confusion.fn + rep.confusion.tn, 8u);
  EXPECT_GE(rep.time_std, 0.0);
}

TEST(Evaluate, SingleClassHasNoAuroc) {
  const auto& s = setup();
  auto idx = adws::scan_dataset(s.corpus.root, adws::Layout::kMvtec);
  std::erase_if(idx.test_images, [](const adws::TestImage& t) { return t.label == A; });
  const auto rep = adws::evaluate(s.dict, idx, {}, s.backbone);
  EXPECT_FALSE(rep.auroc.has_value());
  EXPECT_TRUE(adws::to_json(rep).at("metrics").at("auroc").is_null());
  EXPECT_NE(adws::csv_row(rep).find(",NA,"), std::string::npos);
}

TEST(Evaluate, BadImageNamesThePath) {
  const auto& s = setup();
  auto idx = adws::scan_dataset(s.corpus.root, adws::Layout::kMvtec);
  const auto bad = fixture::temp_dir("eval-bad") / "junk.png";
  fixture::write_bytes(bad, {0x89, 'P', 'N', 'G'});
  idx.test_images.resize(1);
  idx.test_images[0].path = bad;
  try {
    adws::evaluate(s.dict, idx, {}, s.backbone);
    FAIL();
  } catch (const adws::Error& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
}

TEST(Evaluate, JsonAndCsvOutputs) {
  const auto& s = setup();
  const auto idx = adws::scan_dataset(s.corpus.root, adws::Layout::kMvtec);
  adws::DetectorConfig cfg;
  cfg.gamma = 0.5;
  const auto rep = adws::evaluate(s.dict, idx, cfg, s.backbone);
  const auto j = adws::to_json(rep);
  EXPECT_EQ(j.at("config").at("selector"), "cosine");
  EXPECT_EQ(j.at("config").at("gamma"), 0.5);
  EXPECT_EQ(j.at("reports").size(), 8u);
  EXPECT_TRUE(j.at("reports")[0].contains("label"));
  EXPECT_TRUE(j.at("metrics").contains("time_mean"));
  const auto quiet = adws::to_json(rep, false);
  EXPECT_FALSE(quiet.at("metrics").contains("time_mean"));
  EXPECT_FALSE(quiet.at("reports")[0].contains("timings"));
  EXPECT_EQ(adws::to_json(adws::evaluate(s.dict, idx, cfg, s.backbone), false).dump(), quiet.dump());

  const auto dir = fixture::temp_dir("eval-out");
  adws::write_csv(dir / "r.csv", rep);
  adws::write_json(dir / "r.json", j);
  std::ifstream csv(dir / "r.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, adws::csv_header());
  EXPECT_EQ(row, adws::csv_row(rep));
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  std::ifstream js(dir / "r.json");
  EXPECT_EQ(nlohmann::json::parse(js), j);
}

TEST(Evaluate, AggregatesMatchPerImageReports) {
  const auto& s = setup();
  const auto idx = adws::scan_dataset(s.corpus.root, adws::Layout::kMvtec);
  adws::DetectorConfig cfg;
  cfg.model = adws::ModelKind::kOcsvm;
  const auto rep = adws::evaluate(s.dict, idx, cfg, s.backbone);
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double saved = 0.0;
  for (std::size_t i = 0; i < rep.reports.size(); ++i) {
    const auto& r = rep.reports[i];
    EXPECT_EQ(r.anomalous, r.image_score > r.tau);
    const bool positive = rep.labels[i] == A;
    tp += r.anomalous && positive;
    fp += r.anomalous && !positive;
    fn += !r.anomalous && positive;
    tn += !r.anomalous && !positive;
    saved += r.percent_saved;
  }
  EXPECT_EQ(rep.confusion.tp, tp);
  EXPECT_EQ(rep.confusion.fp, fp);
  EXPECT_EQ(rep.confusion.fn, fn);
  EXPECT_EQ(rep.confusion.tn, tn);
  EXPECT_DOUBLE_EQ(rep.confusion.accuracy, static_cast<double>(tp + tn) / rep.reports.size());
  EXPECT_NEAR(rep.pct_saved_mean, saved / rep.reports.size(), 1e-12);
}
