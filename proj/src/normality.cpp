// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/normality.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <list>
#include <numeric>

#include <nlohmann/json.hpp>

#include "adws/error.hpp"
#include "adws/rng.hpp"

namespace fs = std::filesystem;

namespace adws {

namespace {

void require_finite(const Matrix& m) {
  if (!m.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "samples contain NaN or Inf");
}

void require_dims(Eigen::Index expected, Eigen::Index got) {
  if (expected != got) {
    throw Error(ErrorCode::kDimMismatch, "expected " + std::to_string(expected) + " dims, got " + std::to_string(got));
  }
}

}  // namespace

// --- MVG ---------------------------------------------------------------------

MvgModel fit_mvg(const Matrix& samples, double shrinkage) {
  if (samples.rows() < 2 || samples.cols() < 1) {
    throw Error(ErrorCode::kTooFewSamples, "MVG needs at least 2 samples, got " + std::to_string(samples.rows()));
  }
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "shrinkage must lie in [0, 1]");
  require_finite(samples);

  const Eigen::Index dims = samples.cols();
  const double n = static_cast<double>(samples.rows());
  MvgModel m;
  m.shrinkage = shrinkage;
  m.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - m.mean.transpose();
  Matrix raw = Matrix::Zero(dims, dims);
  raw.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / n);
  raw = raw.selfadjointView<Eigen::Lower>();

  const double trace = raw.trace();
  if (trace == 0.0) {
    m.covariance = Matrix::Identity(dims, dims) * 1e-6;
  } else {
    m.covariance = (1.0 - shrinkage) * raw;
    m.covariance.diagonal().array() += shrinkage * trace / static_cast<double>(dims);
  }
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose());

  Eigen::LLT<Matrix> llt(m.covariance);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularCovariance, "covariance is not positive definite; increase shrinkage");
  }
  m.cholesky_lower = llt.matrixL();
  return m;
}

double mahalanobis(const MvgModel& model, const Vector& x) {
  require_dims(model.dims(), x.size());
  const Vector z = model.cholesky_lower.triangularView<Eigen::Lower>().solve(x - model.mean);
  return z.norm();
}

Vector mahalanobis_rows(const MvgModel& model, const Matrix& rows) {
  require_dims(model.dims(), rows.cols());
  Matrix centered = (rows.rowwise() - model.mean.transpose()).transpose();
  model.cholesky_lower.triangularView<Eigen::Lower>().solveInPlace(centered);
  return centered.colwise().norm().transpose();
}

// --- OCSVM -------------------------------------------------------------------

double rbf_kernel(const Vector& x, const Vector& y, double gamma) {
  require_dims(x.size(), y.size());
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0");
  return std::exp(-gamma * (x - y).squaredNorm());
}

double auto_gamma(const Matrix& samples) {
  const double n = static_cast<double>(samples.rows());
  const Vector mean = samples.colwise().mean().transpose();
  const double mean_var = ((samples.rowwise() - mean.transpose()).array().square().colwise().sum() / n).mean();
  return 1.0 / (static_cast<double>(samples.cols()) * std::max(mean_var, 1e-12));
}

namespace {

// LRU cache of kernel rows K(i, .).
class KernelRows {
 public:
  KernelRows(const Matrix& x, double gamma, std::size_t cache_bytes)
      : x_(x), gamma_(gamma), sq_(x.rowwise().squaredNorm()), slot_of_(x.rows(), -1) {
    const std::size_t n = static_cast<std::size_t>(x.rows());
    capacity_ = std::max<std::size_t>(2, cache_bytes / std::max<std::size_t>(1, n * sizeof(double)));
    capacity_ = std::min(capacity_, n);
    rows_.reserve(capacity_);
  }

  const Vector& row(Eigen::Index i) {
    if (slot_of_[i] >= 0) {
      lru_.splice(lru_.begin(), lru_, where_[slot_of_[i]]);
      return rows_[slot_of_[i]];
    }
    int slot;
    if (rows_.size() < capacity_) {
      slot = static_cast<int>(rows_.size());
      rows_.emplace_back();
      owner_.push_back(-1);
      where_.emplace_back();
    } else {
      slot = lru_.back();
      lru_.pop_back();
      slot_of_[owner_[slot]] = -1;
    }
    Vector& r = rows_[slot];
    r.noalias() = x_ * x_.row(i).transpose();
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      const double d2 = std::max(0.0, sq_[i] + sq_[j] - 2.0 * r[j]);
      r[j] = std::exp(-gamma_ * d2);
    }
    r[i] = 1.0;
    owner_[slot] = static_cast<int>(i);
    slot_of_[i] = slot;
    lru_.push_front(slot);
    where_[slot] = lru_.begin();
    return r;
  }

 private:
  const Matrix& x_;
  double gamma_;
  Vector sq_;
  std::size_t capacity_;
  std::vector<Vector> rows_;
  std::vector<int> owner_;
  std::vector<int> slot_of_;
  std::list<int> lru_;
  std::vector<std::list<int>::iterator> where_;
};

struct Violation {
  double value;
  Eigen::Index up;  // argmax of -G over alpha < C
};

double compute_rho(const Vector& alpha, const Vector& grad, double upper) {
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double lb = -std::numeric_limits<double>::infinity();
  double ub = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < alpha.size(); ++t) {
    if (alpha[t] > 0.0 && alpha[t] < upper) {
      free_sum += grad[t];
      ++free_count;
    } else if (alpha[t] == 0.0) {
      ub = std::min(ub, grad[t]);
    } else {
      lb = std::max(lb, grad[t]);
    }
  }
  if (free_count > 0) return free_sum / static_cast<double>(free_count);
  if (std::isinf(lb)) return ub;
  if (std::isinf(ub)) return lb;
  return 0.5 * (lb + ub);
}

double max_kkt_violation(const Vector& alpha, const Vector& grad, double upper) {
  double g_up = -std::numeric_limits<double>::infinity();
  double g_low = -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < alpha.size(); ++t) {
    if (alpha[t] < upper) g_up = std::max(g_up, -grad[t]);
    if (alpha[t] > 0.0) g_low = std::max(g_low, grad[t]);
  }
  return g_up + g_low;
}

}  // namespace

OcsvmDualSolution solve_ocsvm_dual(const Matrix& samples, double gamma, double nu, double tol,
                                   std::size_t cache_bytes) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "OCSVM needs at least 2 samples");
  if (!(nu > 0.0 && nu <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "nu must lie in (0, 1]");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tol must be > 0");

  const double upper = 1.0 / (nu * static_cast<double>(n));
  KernelRows kernel(samples, gamma, cache_bytes);

  OcsvmDualSolution sol;
  sol.alpha = Vector::Zero(n);
  // Feasible start: fill the first entries up to the box bound.
  double remaining = 1.0;
  for (Eigen::Index t = 0; t < n && remaining > 0.0; ++t) {
    sol.alpha[t] = std::min(upper, remaining);
    remaining -= sol.alpha[t];
    if (remaining < 1e-15) remaining = 0.0;
  }
  sol.gradient = Vector::Zero(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (sol.alpha[t] > 0.0) sol.gradient.noalias() += sol.alpha[t] * kernel.row(t);
  }

  Vector& alpha = sol.alpha;
  Vector& grad = sol.gradient;
  const std::size_t max_iter = 100 * static_cast<std::size_t>(n);
  constexpr double kTau = 1e-12;

  while (true) {
    // i: maximal -G among entries that can grow.
    double g_max = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (alpha[t] < upper && -grad[t] > g_max) {
        g_max = -grad[t];
        i = t;
      }
    }
    double g_low = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (alpha[t] > 0.0) g_low = std::max(g_low, grad[t]);
    }
    sol.max_violation = g_max + g_low;
    if (i < 0 || sol.max_violation < tol) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= max_iter) break;

    // j: second-order choice among entries that can shrink.
    const Vector& ki = kernel.row(i);
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!(alpha[t] > 0.0)) continue;
      const double b = g_max + grad[t];
      if (b <= 0.0) continue;
      double a = 2.0 - 2.0 * ki[t];
      if (a <= 0.0) a = kTau;
      const double obj = -(b * b) / a;
      if (obj < best) {
        best = obj;
        j = t;
      }
    }
    if (j < 0) {
      sol.converged = true;
      break;
    }
    const Vector& kj = kernel.row(j);
    const Vector& ki2 = kernel.row(i);  // may have been evicted by row(j)
    double a = 2.0 - 2.0 * ki2[j];
    if (a <= 0.0) a = kTau;
    double delta = (grad[j] - grad[i]) / a;
    delta = std::min({delta, upper - alpha[i], alpha[j]});
    if (delta <= 0.0) {
      // No progress possible on this pair; treat as converged to avoid spinning.
      break;
    }
    const bool i_hits_bound = delta >= upper - alpha[i];
    const bool j_hits_zero = delta >= alpha[j];
    alpha[i] = i_hits_bound ? upper : alpha[i] + delta;
    alpha[j] = j_hits_zero ? 0.0 : alpha[j] - delta;
    grad.noalias() += delta * (ki2 - kj);
    ++sol.iterations;
  }

  sol.rho = compute_rho(alpha, grad, upper);
  sol.objective = 0.5 * alpha.dot(grad);
  sol.max_violation = max_kkt_violation(alpha, grad, upper);
  return sol;
}

OcsvmModel fit_ocsvm(const Matrix& samples, const OcsvmParams& params) {
  if (samples.rows() < 2) throw Error(ErrorCode::kTooFewSamples, "OCSVM needs at least 2 samples");
  if (!(params.nu > 0.0 && params.nu <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "nu must lie in (0, 1]");
  require_finite(samples);

  Matrix fit_set;
  const Matrix* data = &samples;
  if (params.cap >= 2 && static_cast<std::size_t>(samples.rows()) > params.cap) {
    // Seeded partial Fisher-Yates; keep the chosen rows in data order.
    Rng rng(params.seed);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(samples.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (std::size_t k = 0; k < params.cap; ++k) {
      const std::size_t pick = k + rng.below(idx.size() - k);
      std::swap(idx[k], idx[pick]);
    }
    idx.resize(params.cap);
    std::sort(idx.begin(), idx.end());
    fit_set.resize(static_cast<Eigen::Index>(idx.size()), samples.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) fit_set.row(static_cast<Eigen::Index>(k)) = samples.row(idx[k]);
    data = &fit_set;
  }

  const double gamma = params.gamma ? *params.gamma : auto_gamma(*data);
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0");
  const OcsvmDualSolution sol = solve_ocsvm_dual(*data, gamma, params.nu, params.tol, params.cache_bytes);

  OcsvmModel m;
  m.gamma = gamma;
  m.nu = params.nu;
  m.rho = sol.rho;
  m.training_size = static_cast<std::size_t>(data->rows());
  m.converged = sol.converged;
  m.iterations = sol.iterations;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < sol.alpha.size(); ++t) {
    if (sol.alpha[t] > 1e-8) sv.push_back(t);
  }
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), data->cols());
  m.coefficients.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    m.support_vectors.row(static_cast<Eigen::Index>(k)) = data->row(sv[k]);
    m.coefficients[static_cast<Eigen::Index>(k)] = sol.alpha[sv[k]];
  }
  return m;
}

double ocsvm_score(const OcsvmModel& model, const Vector& x) {
  require_dims(model.dims(), x.size());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < model.support_vectors.rows(); ++k) {
    sum += model.coefficients[k] * std::exp(-model.gamma * (model.support_vectors.row(k).transpose() - x).squaredNorm());
  }
  return model.rho - sum;
}

Vector ocsvm_score_rows(const OcsvmModel& model, const Matrix& rows) {
  require_dims(model.dims(), rows.cols());
  const Eigen::Index n = rows.rows();
  Vector out(n);
  const Vector sv_sq = model.support_vectors.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const Eigen::Index len = std::min(kBlock, n - start);
    const auto block = rows.middleRows(start, len);
    const Vector row_sq = block.rowwise().squaredNorm();
    Matrix cross = block * model.support_vectors.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      double sum = 0.0;
      for (Eigen::Index k = 0; k < cross.cols(); ++k) {
        const double d2 = std::max(0.0, row_sq[r] + sv_sq[k] - 2.0 * cross(r, k));
        sum += model.coefficients[k] * std::exp(-model.gamma * d2);
      }
      out[start + r] = model.rho - sum;
    }
  }
  return out;
}

// --- shared ------------------------------------------------------------------

std::string_view to_string(ModelKind kind) { return kind == ModelKind::kMvg ? "mvg" : "ocsvm"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mvg") return ModelKind::kMvg;
  if (name == "ocsvm") return ModelKind::kOcsvm;
  throw Error(ErrorCode::kInvalidArgument, "unknown model '" + std::string(name) + "'");
}

ModelKind kind_of(const NormalityModel& model) {
  return std::holds_alternative<MvgModel>(model) ? ModelKind::kMvg : ModelKind::kOcsvm;
}

Eigen::Index model_dims(const NormalityModel& model) {
  return std::visit([](const auto& m) { return m.dims(); }, model);
}

double model_score(const NormalityModel& model, const Vector& x) {
  if (const auto* mvg = std::get_if<MvgModel>(&model)) return mahalanobis(*mvg, x);
  return ocsvm_score(std::get<OcsvmModel>(model), x);
}

Vector model_score_rows(const NormalityModel& model, const Matrix& rows) {
  if (const auto* mvg = std::get_if<MvgModel>(&model)) return mahalanobis_rows(*mvg, rows);
  return ocsvm_score_rows(std::get<OcsvmModel>(model), rows);
}

Matrix stack_locations(std::span<const FeatureMap* const> maps) {
  Eigen::Index rows = 0;
  int channels = -1;
  for (const FeatureMap* fm : maps) {
    if (channels >= 0 && fm->shape.channels != channels) {
      throw Error(ErrorCode::kDimMismatch, "feature maps with different channel counts");
    }
    channels = fm->shape.channels;
    rows += static_cast<Eigen::Index>(fm->locations());
  }
  Matrix out(rows, std::max(channels, 0));
  Eigen::Index r = 0;
  for (const FeatureMap* fm : maps) {
    for (std::size_t loc = 0; loc < fm->locations(); ++loc, ++r) {
      const auto v = fm->at(loc);
      for (int c = 0; c < channels; ++c) out(r, c) = v[c];
    }
  }
  return out;
}

Matrix feature_rows(const FeatureMap& fm) {
  const FeatureMap* one[] = {&fm};
  return stack_locations(one);
}

Threshold threshold_from_scores(std::span<const double> training_scores, double margin, ModelKind source) {
  if (training_scores.empty()) throw Error(ErrorCode::kEmptyTraining, "no training scores for the threshold");
  if (!(margin >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "margin must be >= 1");
  Threshold t;
  t.margin = margin;
  t.source = source;
  t.training_max = *std::max_element(training_scores.begin(), training_scores.end());
  t.tau = t.training_max >= 0.0 ? margin * t.training_max : t.training_max + (margin - 1.0) * -t.training_max;
  return t;
}

Threshold adaptive_threshold(const NormalityModel& model, std::span<const FeatureMap* const> training_maps,
                             double margin) {
  if (training_maps.empty()) throw Error(ErrorCode::kEmptyTraining, "no training maps for the threshold");
  // Score map by map, exactly as test images are scored.
  std::vector<double> scores;
  for (const FeatureMap* fm : training_maps) {
    const ScoreMap sm = score_map(model, *fm);
    scores.insert(scores.end(), sm.values.begin(), sm.values.end());
  }
  if (scores.empty()) throw Error(ErrorCode::kEmptyTraining, "training maps have no locations");
  return threshold_from_scores(scores, margin, kind_of(model));
}

ScoreMap score_map(const NormalityModel& model, const FeatureMap& fm) {
  require_dims(model_dims(model), fm.shape.channels);
  const Vector scores = model_score_rows(model, feature_rows(fm));
  ScoreMap sm;
  sm.height = fm.shape.height;
  sm.width = fm.shape.width;
  sm.values.assign(scores.data(), scores.data() + scores.size());
  if (!sm.values.empty()) {
    const auto it = std::max_element(sm.values.begin(), sm.values.end());
    sm.argmax = static_cast<std::size_t>(it - sm.values.begin());
    sm.image_score = *it;
  }
  return sm;
}

// --- serialization -----------------------------------------------------------

namespace {

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

class F64Reader {
 public:
  explicit F64Reader(std::span<const std::uint8_t> in) : in_(in) {}
  double next() {
    if (in_.size() - pos_ < 8) throw Error(ErrorCode::kDictionaryFormat, "model payload truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = next();
    }
    return m;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const NormalityModel& model) {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
  if (const auto* m = std::get_if<MvgModel>(&model)) {
    header = {{"kind", "mvg"}, {"dims", m->dims()}, {"hyperparameters", {{"shrinkage", m->shrinkage}}}};
    put_matrix(payload, m->mean.transpose());
    put_matrix(payload, m->covariance);
    put_matrix(payload, m->cholesky_lower);
  } else {
    const auto& o = std::get<OcsvmModel>(model);
    header = {{"kind", "ocsvm"},
              {"dims", o.dims()},
              {"hyperparameters", {{"nu", o.nu}, {"gamma", o.gamma}}},
              {"support_vectors", o.support_vectors.rows()},
              {"training_size", o.training_size},
              {"converged", o.converged},
              {"iterations", o.iterations}};
    put_matrix(payload, o.support_vectors);
    put_matrix(payload, o.coefficients.transpose());
    put_f64(payload, o.rho);
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

NormalityModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::kDictionaryFormat, "model file too short");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  if (len > bytes.size() - 4) throw Error(ErrorCode::kDictionaryFormat, "model header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kDictionaryFormat, std::string("bad model header: ") + e.what());
  }
  F64Reader r(bytes.subspan(4 + len));
  const auto dims = header.at("dims").get<Eigen::Index>();
  NormalityModel out;
  if (header.at("kind") == "mvg") {
    MvgModel m;
    m.shrinkage = header.at("hyperparameters").at("shrinkage").get<double>();
    m.mean = r.matrix(1, dims).transpose();
    m.covariance = r.matrix(dims, dims);
    m.cholesky_lower = r.matrix(dims, dims);
    out = std::move(m);
  } else {
    OcsvmModel o;
    o.nu = header.at("hyperparameters").at("nu").get<double>();
    o.gamma = header.at("hyperparameters").at("gamma").get<double>();
    o.training_size = header.at("training_size").get<std::size_t>();
    o.converged = header.at("converged").get<bool>();
    o.iterations = header.at("iterations").get<std::size_t>();
    const auto count = header.at("support_vectors").get<Eigen::Index>();
    o.support_vectors = r.matrix(count, dims);
    o.coefficients = r.matrix(1, count).transpose();
    o.rho = r.next();
    out = std::move(o);
  }
  if (!r.done()) throw Error(ErrorCode::kDictionaryFormat, "trailing bytes in model payload");
  return out;
}

void save_model(const NormalityModel& model, const fs::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NormalityModel load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace adws
