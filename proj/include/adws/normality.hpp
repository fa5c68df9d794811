// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "adws/backbone.hpp"

namespace adws {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// --- multivariate Gaussian --------------------------------------------------

struct MvgModel {
  Vector mean;
  Matrix covariance;  // after shrinkage
  Matrix cholesky_lower;  // covariance = L * L^T
  double shrinkage = 0.0;

  Eigen::Index dims() const { return mean.size(); }
};

/// Fits mean and (1/N) covariance of the rows of `samples`, shrunk toward
/// (tr/C) * I by `shrinkage`. A zero-trace covariance becomes 1e-6 * I.
MvgModel fit_mvg(const Matrix& samples, double shrinkage = 0.01);

/// sqrt((x - mu)^T Sigma^-1 (x - mu)) by triangular solve against L.
double mahalanobis(const MvgModel& model, const Vector& x);
/// Distances for every row of `rows`.
Vector mahalanobis_rows(const MvgModel& model, const Matrix& rows);

// --- one-class SVM ----------------------------------------------------------

double rbf_kernel(const Vector& x, const Vector& y, double gamma);

/// 1 / (C * mean per-dimension variance), variance floored at 1e-12.
double auto_gamma(const Matrix& samples);

struct OcsvmParams {
  double nu = 0.05;
  std::optional<double> gamma;  // nullopt: auto_gamma
  double tol = 1e-4;
  std::size_t cap = 20000;
  std::uint64_t seed = 0;
  std::size_t cache_bytes = std::size_t{256} << 20;
};

/// Full solution of the nu-one-class dual
///   min 1/2 a^T K a  s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1.
struct OcsvmDualSolution {
  Vector alpha;
  Vector gradient;  // K a
  double rho = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// SMO with second-order working-set selection; stops when the maximal KKT
/// violation drops below `tol` or after 100 * n iterations.
OcsvmDualSolution solve_ocsvm_dual(const Matrix& samples, double gamma, double nu, double tol,
                                   std::size_t cache_bytes = std::size_t{256} << 20);

struct OcsvmModel {
  Matrix support_vectors;  // one per row
  Vector coefficients;
  double rho = 0.0;
  double gamma = 1.0;
  double nu = 0.05;
  std::size_t training_size = 0;  // after subsampling
  bool converged = true;
  std::size_t iterations = 0;

  Eigen::Index dims() const { return support_vectors.cols(); }
};

OcsvmModel fit_ocsvm(const Matrix& samples, const OcsvmParams& params = {});

/// rho - sum_i a_i K(x_i, x); negative inside the learned region.
double ocsvm_score(const OcsvmModel& model, const Vector& x);
Vector ocsvm_score_rows(const OcsvmModel& model, const Matrix& rows);

// --- shared scoring ---------------------------------------------------------

enum class ModelKind { kMvg, kOcsvm };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

using NormalityModel = std::variant<MvgModel, OcsvmModel>;

ModelKind kind_of(const NormalityModel& model);
Eigen::Index model_dims(const NormalityModel& model);
double model_score(const NormalityModel& model, const Vector& x);
Vector model_score_rows(const NormalityModel& model, const Matrix& rows);

/// Stacks every grid location of every map into one row each.
Matrix stack_locations(std::span<const FeatureMap* const> maps);
Matrix feature_rows(const FeatureMap& fm);

struct Threshold {
  double tau = 0.0;
  double margin = 1.0;
  double training_max = 0.0;
  ModelKind source = ModelKind::kMvg;
};

/// tau = margin * (max training score); for a negative maximum the margin
/// widens by |max| instead so that tau never drops below it.
Threshold adaptive_threshold(const NormalityModel& model, std::span<const FeatureMap* const> training_maps,
                             double margin = 1.0);
Threshold threshold_from_scores(std::span<const double> training_scores, double margin, ModelKind source);

struct ScoreMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major
  double image_score = 0.0;
  std::size_t argmax = 0;

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

ScoreMap score_map(const NormalityModel& model, const FeatureMap& fm);

/// Debug serialization: u32 header length, JSON header {kind, dims,
/// hyperparameters, ...}, then little-endian f64 payload.
void save_model(const NormalityModel& model, const std::filesystem::path& path);
NormalityModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const NormalityModel& model);
NormalityModel deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace adws
