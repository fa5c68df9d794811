// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: build-dict, detect, evaluate, synth.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "adws/backbone.hpp"
#include "adws/error.hpp"
#include "adws/eval.hpp"
#include "adws/heatmap.hpp"
#include "adws/ingest.hpp"
#include "adws/pipeline.hpp"
#include "adws/selection.hpp"
#include "adws/synth.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

struct BackboneArgs {
  std::string model;
  std::string meta;
};

struct DetectorArgs {
  std::string selector = "cosine";
  std::optional<double> sp;
  std::string model = "mvg";
  double alpha = 0.7;
  double shrinkage = 0.01;
  double nu = 0.05;
  std::optional<double> gamma;
  double margin = 1.0;
  std::size_t fallback_k = 5;
  std::uint64_t seed = 0;
  std::string search = "approximate";
  int checks = 64;

  adws::DetectorConfig config() const {
    adws::DetectorConfig c;
    c.selector = adws::parse_selector(selector);
    c.sp = sp;
    c.model = adws::parse_model_kind(model);
    c.alpha = alpha;
    c.shrinkage = shrinkage;
    c.nu = nu;
    c.gamma = gamma;
    c.margin = margin;
    c.fallback_k = fallback_k;
    c.seed = seed;
    c.search.mode = search == "exact" ? adws::SearchMode::kExact : adws::SearchMode::kApproximate;
    c.search.checks = checks;
    c.validate();
    return c;
  }
};

void add_backbone_options(CLI::App* cmd, BackboneArgs& a) {
  cmd->add_option("--backbone", a.model, "ONNX model file (not needed for stub metadata)");
  cmd->add_option("--meta", a.meta, "backbone metadata JSON")->required()->check(CLI::ExistingFile);
}

void add_detector_options(CLI::App* cmd, DetectorArgs& a) {
  cmd->add_option("--selector", a.selector, "training-data selector")
      ->check(CLI::IsMember({"cosine", "sift-flann"}))
      ->capture_default_str();
  cmd->add_option("--sp", a.sp, "similarity parameter (default 0.75 cosine, 0.70 sift-flann)");
  cmd->add_option("--model", a.model, "normality model")->check(CLI::IsMember({"mvg", "ocsvm"}))->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "ratio-test factor")->capture_default_str();
  cmd->add_option("--shrinkage", a.shrinkage, "MVG covariance shrinkage")->capture_default_str();
  cmd->add_option("--nu", a.nu, "OCSVM nu")->capture_default_str();
  cmd->add_option("--gamma", a.gamma, "OCSVM RBF gamma (default: auto)");
  cmd->add_option("--margin", a.margin, "threshold margin (>= 1)")->capture_default_str();
  cmd->add_option("--fallback-k", a.fallback_k, "images kept when none reach sp")->capture_default_str();
  cmd->add_option("--seed", a.seed, "random seed")->capture_default_str();
  cmd->add_option("--search", a.search, "descriptor search mode")
      ->check(CLI::IsMember({"exact", "approximate"}))
      ->capture_default_str();
  cmd->add_option("--checks", a.checks, "leaf checks for approximate search")->capture_default_str();
}

adws::Backbone open_backbone(const BackboneArgs& a) {
  const adws::BackboneMetadata meta = adws::read_backbone_metadata(a.meta);
  if (meta.kind != adws::BackboneKind::kStub && a.model.empty()) {
    throw adws::Error(adws::ErrorCode::kInvalidArgument, "--backbone is required for external-model metadata");
  }
  return adws::load_backbone(a.model, a.meta);
}

void progress_line(std::size_t done, std::size_t total, const std::string& what, bool quiet) {
  if (quiet) return;
  std::fprintf(stderr, "[%zu/%zu] %s\n", done, total, what.c_str());
}

int exit_code_for(const adws::Error& e) {
  switch (adws::category(e.code())) {
    case adws::ErrorCategory::kUsage:
      return kUsage;
    case adws::ErrorCategory::kData:
      return kData;
    case adws::ErrorCategory::kModel:
      return kModel;
  }
  return kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online-adaptive image anomaly detection"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  // build-dict
  auto* build = app.add_subcommand("build-dict", "index a training set");
  std::string data_dir;
  std::string layout = "mvtec";
  std::string dict_out;
  BackboneArgs build_bb;
  build->add_option("--data", data_dir, "dataset root")->required();
  build->add_option("--layout", layout, "dataset layout")->check(CLI::IsMember({"mvtec", "flat"}))->capture_default_str();
  add_backbone_options(build, build_bb);
  build->add_option("--out", dict_out, "dictionary file")->required();

  // detect
  auto* det = app.add_subcommand("detect", "score one image");
  std::string dict_path;
  std::string image_path;
  std::string report_path;
  std::string heatmap_path;
  BackboneArgs det_bb;
  DetectorArgs det_args;
  det->add_option("--dict", dict_path, "dictionary file")->required()->check(CLI::ExistingFile);
  add_backbone_options(det, det_bb);
  det->add_option("--image", image_path, "image to score")->required();
  det->add_option("--report", report_path, "report JSON (default: stdout)");
  det->add_option("--heatmap", heatmap_path, "heatmap PNG");
  add_detector_options(det, det_args);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a labelled test set");
  std::string eval_dict;
  std::string test_dir;
  std::string eval_layout = "mvtec";
  std::string csv_path;
  std::string json_path;
  bool no_timings = false;
  BackboneArgs ev_bb;
  DetectorArgs ev_args;
  ev->add_option("--dict", eval_dict, "dictionary file")->required()->check(CLI::ExistingFile);
  add_backbone_options(ev, ev_bb);
  ev->add_option("--testdir", test_dir, "dataset root holding the test split")->required();
  ev->add_option("--layout", eval_layout, "dataset layout")
      ->check(CLI::IsMember({"mvtec", "flat"}))
      ->capture_default_str();
  ev->add_option("--csv", csv_path, "summary CSV");
  ev->add_option("--json", json_path, "full JSON report");
  ev->add_flag("--no-timings", no_timings, "omit wall times from the JSON report");
  add_detector_options(ev, ev_args);

  // synth
  auto* syn = app.add_subcommand("synth", "generate the synthetic benchmark corpus");
  adws::SynthParams sp;
  std::string synth_out;
  syn->add_option("--out", synth_out, "output directory")->required();
  syn->add_option("--train", sp.train, "training images")->capture_default_str();
  syn->add_option("--normals", sp.normals, "normal test images")->capture_default_str();
  syn->add_option("--anomalies", sp.anomalies, "anomalous test images")->capture_default_str();
  syn->add_option("--environments", sp.environments, "distinct texture environments")->capture_default_str();
  syn->add_option("--size", sp.size, "image side in pixels")->capture_default_str();
  syn->add_option("--seed", sp.seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      const adws::Backbone bb = open_backbone(build_bb);
      const adws::DatasetIndex index = adws::scan_dataset(data_dir, adws::parse_layout(layout));
      const adws::FeatureDictionary dict =
          adws::build_dictionary(index, bb, adws::SiftConfig{}, [&](std::size_t d, std::size_t t, const std::string& id) {
            progress_line(d, t, id, quiet);
          });
      adws::save_dictionary(dict, dict_out);
      if (!quiet) std::fprintf(stderr, "wrote %zu entries to %s\n", dict.size(), dict_out.c_str());
    } else if (*det) {
      const adws::DetectorConfig cfg = det_args.config();
      const adws::Backbone bb = open_backbone(det_bb);
      const adws::FeatureDictionary dict = adws::load_dictionary(dict_path, bb.model_id());
      const adws::Image img = adws::read_image(image_path);
      const adws::AnomalyReport report = adws::detect(dict, img, cfg, bb, fs::path(image_path).filename().string());
      if (report_path.empty()) {
        std::cout << adws::to_json(report).dump(2) << '\n';
      } else {
        adws::write_json(report_path, adws::to_json(report));
      }
      if (!heatmap_path.empty()) adws::write_png(heatmap_path, adws::render_heatmap_image(report.score_map, img, report.tau));
    } else if (*ev) {
      const adws::DetectorConfig cfg = ev_args.config();
      const adws::Backbone bb = open_backbone(ev_bb);
      const adws::FeatureDictionary dict = adws::load_dictionary(eval_dict, bb.model_id());
      const adws::DatasetIndex index = adws::scan_dataset(test_dir, adws::parse_layout(eval_layout));
      const adws::EvalReport report =
          adws::evaluate(dict, index, cfg, bb, [&](std::size_t d, std::size_t t, const adws::AnomalyReport& r) {
            progress_line(d, t, r.image_id + (r.anomalous ? " anomalous" : " normal"), quiet);
          });
      if (!csv_path.empty()) adws::write_csv(csv_path, report);
      if (!json_path.empty()) adws::write_json(json_path, adws::to_json(report, !no_timings));
      std::cout << adws::csv_header() << '\n' << adws::csv_row(report) << '\n';
    } else if (*syn) {
      sp.out = synth_out;
      const adws::SynthCorpus corpus = adws::generate_synthetic_corpus(sp);
      if (!quiet) {
        std::fprintf(stderr, "wrote corpus to %s (%zu defects); backbone metadata: %s\n", synth_out.c_str(),
                     corpus.defects.size(), (fs::path(synth_out) / "stub_backbone.json").c_str());
      }
    }
  } catch (const adws::Error& e) {
    std::fprintf(stderr, "adws: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "adws: %s\n", e.what());
    return kData;
  }
  return kOk;
}
