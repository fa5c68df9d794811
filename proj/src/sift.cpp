// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/sift.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <set>
#include <tuple>

#include <Eigen/Dense>

#include "adws/error.hpp"

namespace adws {

namespace {

constexpr int kImageBorder = 5;
constexpr int kMaxRefineSteps = 5;
constexpr int kOriBins = 36;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
constexpr double kOriPeakRatio = 0.8;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescScaleFactor = 3.0;
constexpr double kBorderScaleFactor = 8.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ull;
  }
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  std::vector<double> tmp(k.size());
  for (int i = -radius; i <= radius; ++i) {
    tmp[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += tmp[i + radius];
  }
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<float>(tmp[i] / sum);
  return k;
}

GrayImage downsample(const GrayImage& src) {
  GrayImage dst((src.width + 1) / 2, (src.height + 1) / 2);
  for (int y = 0; y < dst.height; ++y) {
    for (int x = 0; x < dst.width; ++x) dst.at(x, y) = src.at(2 * x, 2 * y);
  }
  return dst;
}

GrayImage subtract(const GrayImage& a, const GrayImage& b) {
  GrayImage d(a.width, a.height);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = a.data[i] - b.data[i];
  return d;
}

}  // namespace

void SiftConfig::validate() const {
  if (!(sigma0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma0 must be > 0");
  if (scales_per_octave < 1) throw Error(ErrorCode::kInvalidArgument, "scales_per_octave must be >= 1");
  if (!(contrast_threshold > 0.0) || !(edge_ratio > 0.0) || !(descriptor_clip > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "SIFT thresholds must be > 0");
  }
  if (assumed_blur < 0.0) throw Error(ErrorCode::kInvalidArgument, "assumed_blur must be >= 0");
  if (max_keypoints < 1 || octaves < 0) throw Error(ErrorCode::kInvalidArgument, "bad SIFT counts");
}

std::uint64_t SiftConfig::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  fnv_mix(h, static_cast<std::uint64_t>(octaves));
  fnv_mix(h, static_cast<std::uint64_t>(scales_per_octave));
  fnv_mix(h, std::bit_cast<std::uint64_t>(sigma0));
  fnv_mix(h, std::bit_cast<std::uint64_t>(assumed_blur));
  fnv_mix(h, std::bit_cast<std::uint64_t>(contrast_threshold));
  fnv_mix(h, std::bit_cast<std::uint64_t>(edge_ratio));
  fnv_mix(h, std::bit_cast<std::uint64_t>(descriptor_clip));
  fnv_mix(h, static_cast<std::uint64_t>(max_keypoints));
  return h;
}

double ScaleSpace::level_sigma(int level) const {
  return sigma0 * std::pow(2.0, static_cast<double>(level) / scales_per_octave);
}

int default_octave_count(int width, int height) {
  int n = 0;
  for (int d = std::min(width, height); d >= 16; d = (d + 1) / 2) ++n;
  return n;
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int r = static_cast<int>(kernel.size() / 2);
  const int w = image.width;
  const int h = image.height;

  std::vector<int> xmap(w + 2 * r), ymap(h + 2 * r);
  for (int i = 0; i < w + 2 * r; ++i) xmap[i] = reflect101(i - r, w);
  for (int i = 0; i < h + 2 * r; ++i) ymap[i] = reflect101(i - r, h);

  GrayImage tmp(w, h);
  std::vector<float> padded(w + 2 * r);
  for (int y = 0; y < h; ++y) {
    const float* row = image.data.data() + static_cast<std::size_t>(y) * w;
    for (int i = 0; i < w + 2 * r; ++i) padded[i] = row[xmap[i]];
    float* out = tmp.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = 0; k <= 2 * r; ++k) acc += kernel[k] * padded[x + k];
      out[x] = acc;
    }
  }

  GrayImage out(w, h);
  std::vector<float> acc(w);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (int k = 0; k <= 2 * r; ++k) {
      const float* row = tmp.data.data() + static_cast<std::size_t>(ymap[y + k]) * w;
      const float kv = kernel[k];
      for (int x = 0; x < w; ++x) acc[x] += kv * row[x];
    }
    std::copy(acc.begin(), acc.end(), out.data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return out;
}

ScaleSpace build_scale_space(const GrayImage& image, const SiftConfig& cfg) {
  cfg.validate();
  if (std::min(image.width, image.height) < 16) {
    throw Error(ErrorCode::kImageTooSmall, std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  const int s = cfg.scales_per_octave;
  const int auto_octaves = default_octave_count(image.width, image.height);
  const int octaves = cfg.octaves > 0 ? std::min(cfg.octaves, auto_octaves) : auto_octaves;
  const int levels = s + 3;

  ScaleSpace ss;
  ss.scales_per_octave = s;
  ss.sigma0 = cfg.sigma0;
  ss.base_width = image.width;
  ss.base_height = image.height;

  std::vector<double> increments(levels, 0.0);
  for (int i = 1; i < levels; ++i) {
    const double prev = ss.level_sigma(i - 1);
    const double cur = ss.level_sigma(i);
    increments[i] = std::sqrt(cur * cur - prev * prev);
  }

  const double initial = std::sqrt(std::max(cfg.sigma0 * cfg.sigma0 - cfg.assumed_blur * cfg.assumed_blur, 0.01));
  ss.gaussians.resize(octaves);
  ss.dogs.resize(octaves);
  for (int o = 0; o < octaves; ++o) {
    auto& g = ss.gaussians[o];
    g.reserve(levels);
    if (o == 0) {
      g.push_back(gaussian_blur(image, initial));
    } else {
      // Level s of the previous octave carries twice the base blur.
      g.push_back(downsample(ss.gaussians[o - 1][s]));
    }
    for (int i = 1; i < levels; ++i) g.push_back(gaussian_blur(g[i - 1], increments[i]));
    auto& d = ss.dogs[o];
    d.reserve(levels - 1);
    for (int i = 0; i + 1 < levels; ++i) d.push_back(subtract(g[i + 1], g[i]));
  }
  return ss;
}

namespace {

bool is_extremum(const std::vector<GrayImage>& dogs, int layer, int x, int y) {
  const float v = dogs[layer].at(x, y);
  if (v > 0.0f) {
    for (int l = layer - 1; l <= layer + 1; ++l) {
      const GrayImage& img = dogs[l];
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (img.at(x + dx, y + dy) > v) return false;
        }
      }
    }
    return true;
  }
  if (v < 0.0f) {
    for (int l = layer - 1; l <= layer + 1; ++l) {
      const GrayImage& img = dogs[l];
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (img.at(x + dx, y + dy) < v) return false;
        }
      }
    }
    return true;
  }
  return false;
}

struct Refined {
  int x, y, layer;
  double ox, oy, os;
  double value;
};

// Iterated quadratic fit of the DoG around (x, y, layer). Returns false when
// the fit wanders off, fails to settle, or is too weak or edge-like.
bool refine(const std::vector<GrayImage>& dogs, int s, int x, int y, int layer, const SiftConfig& cfg, Refined& out) {
  const int w = dogs[0].width;
  const int h = dogs[0].height;
  Eigen::Vector3d grad;
  Eigen::Vector3d offset;
  bool settled = false;
  for (int step = 0; step < kMaxRefineSteps; ++step) {
    const GrayImage& prev = dogs[layer - 1];
    const GrayImage& cur = dogs[layer];
    const GrayImage& next = dogs[layer + 1];
    const double v2 = 2.0 * cur.at(x, y);
    grad << 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y)), 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1)),
        0.5 * (next.at(x, y) - prev.at(x, y));
    const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
    const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
    const double dss = next.at(x, y) + prev.at(x, y) - v2;
    const double dxy =
        0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
    const double dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
    const double dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
    Eigen::Matrix3d hess;
    hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
    const double det = hess.determinant();
    if (det == 0.0 || !std::isfinite(det)) return false;
    offset = -hess.inverse() * grad;
    if (!offset.allFinite()) return false;
    if (std::abs(offset[0]) < 0.5 && std::abs(offset[1]) < 0.5 && std::abs(offset[2]) < 0.5) {
      settled = true;
      break;
    }
    if (offset.cwiseAbs().maxCoeff() > 1e6) return false;
    x += static_cast<int>(std::lround(offset[0]));
    y += static_cast<int>(std::lround(offset[1]));
    layer += static_cast<int>(std::lround(offset[2]));
    if (layer < 1 || layer > s || x < kImageBorder || x >= w - kImageBorder || y < kImageBorder ||
        y >= h - kImageBorder) {
      return false;
    }
  }
  if (!settled) return false;

  const GrayImage& cur = dogs[layer];
  const double value = cur.at(x, y) + 0.5 * grad.dot(offset);
  if (std::abs(value) < cfg.contrast_threshold) return false;

  const double v2 = 2.0 * cur.at(x, y);
  const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
  const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
  const double dxy =
      0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
  const double trace = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = cfg.edge_ratio;
  if (det <= 0.0 || trace * trace * r >= (r + 1.0) * (r + 1.0) * det) return false;

  out = {x, y, layer, offset[0], offset[1], offset[2], value};
  return true;
}

bool keypoint_before(const Keypoint& a, const Keypoint& b) {
  return std::tie(b.response, a.y, a.x, a.sigma, a.orientation) <
         std::tie(a.response, b.y, b.x, b.sigma, b.orientation);
}

void cap_keypoints(std::vector<Keypoint>& kps, int max_keypoints) {
  std::stable_sort(kps.begin(), kps.end(), keypoint_before);
  if (kps.size() > static_cast<std::size_t>(max_keypoints)) kps.resize(max_keypoints);
}

double octave_sigma(const ScaleSpace& ss, const Keypoint& kp) {
  return ss.sigma0 * std::pow(2.0, (kp.scale_index + kp.scale_offset) / ss.scales_per_octave);
}

int octave_coord(float v, int octave) { return static_cast<int>(std::lround(v / std::ldexp(1.0, octave))); }

}  // namespace

std::vector<Keypoint> detect_keypoints(const ScaleSpace& ss, const SiftConfig& cfg) {
  const int s = ss.scales_per_octave;
  const float prelim = static_cast<float>(0.5 * cfg.contrast_threshold);
  std::vector<Keypoint> kps;
  for (int o = 0; o < ss.octaves(); ++o) {
    const auto& dogs = ss.dogs[o];
    const int w = dogs[0].width;
    const int h = dogs[0].height;
    if (w <= 2 * kImageBorder || h <= 2 * kImageBorder) continue;
    const double scale = std::ldexp(1.0, o);
    std::set<std::tuple<int, int, int>> seen;
    for (int layer = 1; layer <= s; ++layer) {
      for (int y = kImageBorder; y < h - kImageBorder; ++y) {
        for (int x = kImageBorder; x < w - kImageBorder; ++x) {
          if (std::abs(dogs[layer].at(x, y)) <= prelim) continue;
          if (!is_extremum(dogs, layer, x, y)) continue;
          Refined r{};
          if (!refine(dogs, s, x, y, layer, cfg, r)) continue;
          if (!seen.insert({r.layer, r.y, r.x}).second) continue;

          Keypoint kp;
          kp.x = static_cast<float>((r.x + r.ox) * scale);
          kp.y = static_cast<float>((r.y + r.oy) * scale);
          kp.octave = o;
          kp.scale_index = r.layer;
          kp.scale_offset = static_cast<float>(r.os);
          kp.sigma = static_cast<float>(ss.sigma0 * std::pow(2.0, (r.layer + r.os) / s) * scale);
          kp.response = static_cast<float>(std::abs(r.value));

          const double margin = kBorderScaleFactor * kp.sigma;
          if (kp.x < margin || kp.y < margin || kp.x > ss.base_width - 1 - margin ||
              kp.y > ss.base_height - 1 - margin) {
            continue;
          }
          kps.push_back(kp);
        }
      }
    }
  }
  cap_keypoints(kps, cfg.max_keypoints);
  return kps;
}

namespace {

std::vector<float> orientation_peaks(const GrayImage& img, int cx, int cy, double sigma_oct) {
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * sigma_oct));
  const double weight_sigma = kOriSigmaFactor * sigma_oct;
  const double exp_scale = -1.0 / (2.0 * weight_sigma * weight_sigma);
  std::array<double, kOriBins> raw{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = cy + i;
    if (y <= 0 || y >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = cx + j;
      if (x <= 0 || x >= img.width - 1) continue;
      const double dx = img.at(x + 1, y) - img.at(x - 1, y);
      const double dy = img.at(x, y + 1) - img.at(x, y - 1);
      const double weight = std::exp((i * i + j * j) * exp_scale);
      const double angle = std::atan2(dy, dx);
      int bin = static_cast<int>(std::lround(kOriBins / kTwoPi * angle));
      if (bin >= kOriBins) bin -= kOriBins;
      if (bin < 0) bin += kOriBins;
      raw[bin] += weight * std::sqrt(dx * dx + dy * dy);
    }
  }
  std::array<double, kOriBins> hist{};
  for (int i = 0; i < kOriBins; ++i) {
    const auto at = [&](int k) { return raw[(k + kOriBins) % kOriBins]; };
    hist[i] = (at(i - 2) + at(i + 2)) * (1.0 / 16.0) + (at(i - 1) + at(i + 1)) * (4.0 / 16.0) + at(i) * (6.0 / 16.0);
  }
  const double max_value = *std::max_element(hist.begin(), hist.end());
  std::vector<float> peaks;
  if (!(max_value > 0.0)) return peaks;
  for (int i = 0; i < kOriBins; ++i) {
    const double left = hist[(i + kOriBins - 1) % kOriBins];
    const double right = hist[(i + 1) % kOriBins];
    const double v = hist[i];
    if (v > left && v > right && v >= kOriPeakRatio * max_value) {
      double bin = i + 0.5 * (left - right) / (left - 2.0 * v + right);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      peaks.push_back(static_cast<float>(bin * kTwoPi / kOriBins));
    }
  }
  return peaks;
}

bool compute_descriptor(const GrayImage& img, int cx, int cy, double sigma_oct, double orientation, double clip,
                        Descriptor& out) {
  constexpr int d = kDescWidth;
  constexpr int n = kDescBins;
  const double hist_width = kDescScaleFactor * sigma_oct;
  int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::sqrt(static_cast<double>(img.width) * img.width +
                                                       static_cast<double>(img.height) * img.height)));
  const double cos_t = std::cos(orientation) / hist_width;
  const double sin_t = std::sin(orientation) / hist_width;
  const double bins_per_rad = n / kTwoPi;
  const double exp_scale = -1.0 / (d * d * 0.5);

  std::array<double, (d + 2) * (d + 2) * (n + 2)> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = cy + i;
    if (y <= 0 || y >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = cx + j;
      if (x <= 0 || x >= img.width - 1) continue;
      // Sample offset expressed in the keypoint frame, in histogram-cell units.
      const double c_rot = j * cos_t + i * sin_t;
      const double r_rot = -j * sin_t + i * cos_t;
      const double rbin = r_rot + d / 2 - 0.5;
      const double cbin = c_rot + d / 2 - 0.5;
      if (!(rbin > -1.0 && rbin < d && cbin > -1.0 && cbin < d)) continue;

      const double dx = img.at(x + 1, y) - img.at(x - 1, y);
      const double dy = img.at(x, y + 1) - img.at(x, y - 1);
      double angle = std::atan2(dy, dx) - orientation;
      angle = std::fmod(angle, kTwoPi);
      if (angle < 0.0) angle += kTwoPi;
      const double obin = angle * bins_per_rad;
      const double mag = std::sqrt(dx * dx + dy * dy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0;
      const double fc = cbin - c0;
      const double fo = obin - o0;
      if (o0 >= n) o0 -= n;
      if (o0 < 0) o0 += n;

      const double v_r1 = mag * fr, v_r0 = mag - v_r1;
      const double v_rc11 = v_r1 * fc, v_rc10 = v_r1 - v_rc11;
      const double v_rc01 = v_r0 * fc, v_rc00 = v_r0 - v_rc01;
      const double v_rco111 = v_rc11 * fo, v_rco110 = v_rc11 - v_rco111;
      const double v_rco101 = v_rc10 * fo, v_rco100 = v_rc10 - v_rco101;
      const double v_rco011 = v_rc01 * fo, v_rco010 = v_rc01 - v_rco011;
      const double v_rco001 = v_rc00 * fo, v_rco000 = v_rc00 - v_rco001;

      const int idx = ((r0 + 1) * (d + 2) + c0 + 1) * (n + 2) + o0;
      hist[idx] += v_rco000;
      hist[idx + 1] += v_rco001;
      hist[idx + (n + 2)] += v_rco010;
      hist[idx + (n + 3)] += v_rco011;
      hist[idx + (d + 2) * (n + 2)] += v_rco100;
      hist[idx + (d + 2) * (n + 2) + 1] += v_rco101;
      hist[idx + (d + 3) * (n + 2)] += v_rco110;
      hist[idx + (d + 3) * (n + 2) + 1] += v_rco111;
    }
  }

  std::array<double, 128> desc{};
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const int idx = ((i + 1) * (d + 2) + (j + 1)) * (n + 2);
      hist[idx] += hist[idx + n];
      hist[idx + 1] += hist[idx + n + 1];
      for (int k = 0; k < n; ++k) desc[(i * d + j) * n + k] = hist[idx + k];
    }
  }

  double norm = 0.0;
  for (double v : desc) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) return false;
  const double limit = clip * norm;
  double norm2 = 0.0;
  for (double& v : desc) {
    v = std::min(v, limit);
    norm2 += v * v;
  }
  norm2 = std::sqrt(norm2);
  for (std::size_t k = 0; k < desc.size(); ++k) out[k] = static_cast<float>(desc[k] / norm2);
  return true;
}

}  // namespace

SiftFeatureSet describe_keypoints(const ScaleSpace& ss, std::span<const Keypoint> keypoints, const SiftConfig& cfg) {
  std::vector<Keypoint> oriented;
  oriented.reserve(keypoints.size());
  for (const Keypoint& kp : keypoints) {
    if (kp.octave < 0 || kp.octave >= ss.octaves()) continue;
    const GrayImage& img = ss.gaussians[kp.octave][kp.scale_index];
    const double sigma_oct = octave_sigma(ss, kp);
    for (float angle : orientation_peaks(img, octave_coord(kp.x, kp.octave), octave_coord(kp.y, kp.octave),
                                         sigma_oct)) {
      Keypoint k = kp;
      k.orientation = angle;
      oriented.push_back(k);
    }
  }
  cap_keypoints(oriented, cfg.max_keypoints);

  SiftFeatureSet set;
  set.keypoints.reserve(oriented.size());
  set.descriptors.reserve(oriented.size());
  for (const Keypoint& kp : oriented) {
    const GrayImage& img = ss.gaussians[kp.octave][kp.scale_index];
    Descriptor desc;
    if (!compute_descriptor(img, octave_coord(kp.x, kp.octave), octave_coord(kp.y, kp.octave), octave_sigma(ss, kp),
                            kp.orientation, cfg.descriptor_clip, desc)) {
      continue;
    }
    set.keypoints.push_back(kp);
    set.descriptors.push_back(desc);
  }
  return set;
}

SiftFeatureSet sift_features(const GrayImage& image, const SiftConfig& cfg) {
  const ScaleSpace ss = build_scale_space(image, cfg);
  const auto kps = detect_keypoints(ss, cfg);
  return describe_keypoints(ss, kps, cfg);
}

std::uint8_t quantize_component(float v) {
  const double q = std::floor(static_cast<double>(v) * 512.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

float dequantize_component(std::uint8_t q) { return static_cast<float>(q) / 512.0f; }

void quantize_descriptors(SiftFeatureSet& set) {
  for (auto& d : set.descriptors) {
    for (float& v : d) v = dequantize_component(quantize_component(v));
  }
}

}  // namespace adws
