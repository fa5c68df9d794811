// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <nlohmann/json.hpp>

#include "adws/error.hpp"

namespace fs = std::filesystem;

namespace adws {

// --- dictionary -------------------------------------------------------------

FeatureDictionary::FeatureDictionary(std::string model_id, std::uint64_t sift_config_hash,
                                     std::vector<DictionaryEntry> entries)
    : model_id_(std::move(model_id)), sift_config_hash_(sift_config_hash), entries_(std::move(entries)) {
  std::vector<std::string> ids;
  ids.reserve(entries_.size());
  for (const auto& e : entries_) {
    ids.push_back(e.image_id);
    if (!(e.feature_map.shape == entries_.front().feature_map.shape)) {
      throw Error(ErrorCode::kDictionaryFormat, "feature map shapes differ across entries");
    }
    if (e.sift.keypoints.size() != e.sift.descriptors.size()) {
      throw Error(ErrorCode::kDictionaryFormat, "keypoint/descriptor count mismatch for " + e.image_id);
    }
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorCode::kDictionaryFormat, "duplicate image ids");
  }
  indices_.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (e.sift.size() >= 2) {
      indices_.emplace_back(std::in_place, e.sift.descriptors);
    } else {
      indices_.emplace_back(std::nullopt);
    }
  }
}

FeatureShape FeatureDictionary::feature_shape() const {
  return entries_.empty() ? FeatureShape{} : entries_.front().feature_map.shape;
}

const DescriptorIndex* FeatureDictionary::descriptor_index(std::size_t i) const {
  return indices_[i] ? &*indices_[i] : nullptr;
}

void FeatureDictionary::check_compatible(std::string_view model_id, std::uint64_t sift_config_hash) const {
  if (model_id != model_id_) {
    throw Error(ErrorCode::kBackboneMismatch,
                "dictionary built with backbone '" + model_id_ + "', got '" + std::string(model_id) + "'");
  }
  if (sift_config_hash != sift_config_hash_) {
    throw Error(ErrorCode::kBackboneMismatch, "dictionary built with a different SIFT configuration");
  }
}

bool equivalent(const FeatureDictionary& a, const FeatureDictionary& b) {
  if (a.model_id() != b.model_id() || a.sift_config_hash() != b.sift_config_hash() || a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entry(i);
    const auto& y = b.entry(i);
    if (x.image_id != y.image_id || x.path != y.path || x.pooled.values != y.pooled.values ||
        !(x.feature_map == y.feature_map) || x.sift.descriptors != y.sift.descriptors ||
        x.sift.keypoints.size() != y.sift.keypoints.size()) {
      return false;
    }
    for (std::size_t k = 0; k < x.sift.keypoints.size(); ++k) {
      const auto& p = x.sift.keypoints[k];
      const auto& q = y.sift.keypoints[k];
      if (p.x != q.x || p.y != q.y || p.sigma != q.sigma || p.orientation != q.orientation) return false;
    }
  }
  return true;
}

DictionaryEntry make_dictionary_entry(std::string image_id, std::string path, const Image& img,
                                      const Backbone& backbone, const SiftConfig& cfg) {
  DictionaryEntry e;
  e.image_id = std::move(image_id);
  e.path = std::move(path);
  e.feature_map = backbone.extract(resize_normalize(img, backbone.normalization()));
  e.pooled = global_pool(e.feature_map);
  e.sift = sift_features(to_grayscale(img), cfg);
  quantize_descriptors(e.sift);
  return e;
}

FeatureDictionary build_dictionary(const DatasetIndex& index, const Backbone& backbone, const SiftConfig& cfg,
                                   const ProgressFn& progress) {
  if (index.train_images.empty()) throw Error(ErrorCode::kEmptyTrainingSet, index.root.string());
  std::vector<TrainImage> train = index.train_images;
  std::sort(train.begin(), train.end(), [](const auto& a, const auto& b) { return a.path < b.path; });

  std::vector<DictionaryEntry> entries;
  entries.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& t = train[i];
    const Image img = read_image(t.path);
    try {
      entries.push_back(make_dictionary_entry(t.id, t.path.generic_string(), img, backbone, cfg));
    } catch (const Error& e) {
      throw Error(e.code(), t.path.string() + ": " + e.detail());
    }
    if (progress) progress(i + 1, train.size(), t.id);
  }
  return FeatureDictionary(backbone.model_id(), cfg.hash(), std::move(entries));
}

// --- binary format ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'D', 'I', 'C'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    const auto b = take(n);
    return {b.begin(), b.end()};
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) throw Error(ErrorCode::kDictionaryFormat, "unexpected end of dictionary data");
    const auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::uint64_t get(int bytes) {
    const auto b = take(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_dictionary(const FeatureDictionary& dict) {
  Writer w;
  w.raw(kMagic, 4);
  w.u16(kVersion);
  w.str(dict.model_id());
  w.u64(dict.sift_config_hash());
  w.u32(static_cast<std::uint32_t>(dict.size()));
  for (const auto& e : dict.entries()) {
    w.str(e.image_id);
    w.str(e.path);
    w.u32(static_cast<std::uint32_t>(e.pooled.values.size()));
    for (float v : e.pooled.values) w.f32(v);
    const FeatureShape s = e.feature_map.shape;
    w.u32(static_cast<std::uint32_t>(s.channels));
    w.u32(static_cast<std::uint32_t>(s.height));
    w.u32(static_cast<std::uint32_t>(s.width));
    for (float v : e.feature_map.data) w.f32(v);
    w.u32(static_cast<std::uint32_t>(e.sift.keypoints.size()));
    for (const auto& kp : e.sift.keypoints) {
      w.f32(kp.x);
      w.f32(kp.y);
      w.f32(kp.sigma);
      w.f32(kp.orientation);
    }
    for (const auto& d : e.sift.descriptors) {
      for (float v : d) w.u8(quantize_component(v));
    }
  }
  return w.take();
}

FeatureDictionary deserialize_dictionary(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::kDictionaryFormat, "bad magic, not a feature dictionary");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) throw Error(ErrorCode::kDictionaryFormat, "unsupported version " + std::to_string(version));
  std::string model_id = r.str();
  const std::uint64_t sift_hash = r.u64();
  const std::uint32_t count = r.u32();
  std::vector<DictionaryEntry> entries;
  entries.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    DictionaryEntry e;
    e.image_id = r.str();
    e.path = r.str();
    const std::uint32_t dim = r.u32();
    e.pooled.values.resize(dim);
    double norm = 0.0;
    for (float& v : e.pooled.values) {
      v = r.f32();
      norm += static_cast<double>(v) * v;
    }
    e.pooled.unit = norm > 0.0;
    FeatureShape s;
    s.channels = static_cast<int>(r.u32());
    s.height = static_cast<int>(r.u32());
    s.width = static_cast<int>(r.u32());
    if (s.channels <= 0 || s.height <= 0 || s.width <= 0) {
      throw Error(ErrorCode::kDictionaryFormat, "bad feature map shape");
    }
    const std::size_t payload = s.locations() * static_cast<std::size_t>(s.channels);
    if (payload * 4 > bytes.size()) throw Error(ErrorCode::kDictionaryFormat, "feature map larger than file");
    e.feature_map = FeatureMap(s);
    for (float& v : e.feature_map.data) v = r.f32();
    const std::uint32_t kp_count = r.u32();
    if (static_cast<std::size_t>(kp_count) * 144 > bytes.size()) {
      throw Error(ErrorCode::kDictionaryFormat, "keypoint count larger than file");
    }
    e.sift.keypoints.resize(kp_count);
    for (auto& kp : e.sift.keypoints) {
      kp.x = r.f32();
      kp.y = r.f32();
      kp.sigma = r.f32();
      kp.orientation = r.f32();
    }
    e.sift.descriptors.resize(kp_count);
    for (auto& d : e.sift.descriptors) {
      const auto q = r.take(128);
      for (int k = 0; k < 128; ++k) d[k] = dequantize_component(q[k]);
    }
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw Error(ErrorCode::kDictionaryFormat, "trailing bytes after dictionary");
  return FeatureDictionary(std::move(model_id), sift_hash, std::move(entries));
}

std::string dictionary_manifest_json(const FeatureDictionary& dict) {
  nlohmann::json doc;
  doc["format"] = "FDIC";
  doc["version"] = kVersion;
  doc["model_id"] = dict.model_id();
  doc["sift_config_hash"] = dict.sift_config_hash();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : dict.entries()) {
    const FeatureShape s = e.feature_map.shape;
    entries.push_back({{"id", e.image_id},
                       {"path", e.path},
                       {"feature_shape", {s.channels, s.height, s.width}},
                       {"keypoints", e.sift.keypoints.size()}});
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

void save_dictionary(const FeatureDictionary& dict, const fs::path& path) {
  const auto bytes = serialize_dictionary(dict);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream manifest(path.string() + ".json");
  if (!manifest) throw Error(ErrorCode::kIo, "cannot write manifest for " + path.string());
  manifest << dictionary_manifest_json(dict);
}

FeatureDictionary load_dictionary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_dictionary(bytes);
}

FeatureDictionary load_dictionary(const fs::path& path, std::string_view expected_model_id) {
  FeatureDictionary dict = load_dictionary(path);
  if (dict.model_id() != expected_model_id) {
    throw Error(ErrorCode::kBackboneMismatch, "dictionary " + path.string() + " was built with backbone '" +
                                                  dict.model_id() + "', expected '" + std::string(expected_model_id) +
                                                  "'");
  }
  return dict;
}

// --- similarity -------------------------------------------------------------

bool ratio_test(double d1, double d2, double alpha) {
  if (!(d2 > 0.0)) return false;
  return d1 < alpha * d2;
}

FspResult fsp(const SiftFeatureSet& test, const DescriptorIndex* train, double alpha, const SearchParams& params) {
  FspResult result;
  if (test.empty() || train == nullptr || train->size() < 2) {
    result.descriptor_starved = true;
    return result;
  }
  for (const Descriptor& q : test.descriptors) {
    const Knn2 nn = train->knn2(q, params);
    ++result.total;
    if (ratio_test(nn.d1, nn.d2, alpha)) ++result.good;
  }
  result.value = static_cast<double>(result.good) / static_cast<double>(result.total);
  return result;
}

FspResult fsp(const SiftFeatureSet& test, const SiftFeatureSet& train, double alpha, const SearchParams& params) {
  if (train.size() < 2) return fsp(test, nullptr, alpha, params);
  const DescriptorIndex index(train.descriptors);
  return fsp(test, &index, alpha, params);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string_view to_string(Selector s) { return s == Selector::kCosine ? "cosine" : "sift-flann"; }

Selector parse_selector(std::string_view name) {
  if (name == "cosine") return Selector::kCosine;
  if (name == "sift-flann") return Selector::kSiftFlann;
  throw Error(ErrorCode::kInvalidArgument, "unknown selector '" + std::string(name) + "'");
}

double default_sp(Selector s) { return s == Selector::kCosine ? 0.75 : 0.70; }

std::vector<std::string> SelectionResult::selected_ids(const FeatureDictionary& dict) const {
  std::vector<std::string> ids;
  ids.reserve(selected.size());
  for (std::size_t i : selected) ids.push_back(dict.entry(i).image_id);
  return ids;
}

SelectionResult select_from_scores(std::vector<double> scores, double sp, std::size_t fallback_k) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyTraining, "no candidates to select from");
  SelectionResult r;
  r.sp = sp;
  r.scores = std::move(scores);
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    if (r.scores[i] >= sp) r.selected.push_back(i);
  }
  if (r.selected.empty()) {
    r.fallback_used = true;
    std::vector<std::size_t> order(r.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.scores[a] > r.scores[b]; });
    order.resize(std::min(std::max<std::size_t>(fallback_k, 1), order.size()));
    std::sort(order.begin(), order.end());
    r.selected = std::move(order);
  }
  return r;
}

SelectionResult select_subset(const FeatureDictionary& dict, const EmbeddingVector& test_pooled,
                              const SiftFeatureSet* test_sift, const SelectionParams& params) {
  if (dict.size() == 0) throw Error(ErrorCode::kEmptyTraining, "dictionary is empty");
  if (!(params.sp > 0.0 && params.sp < 1.0)) throw Error(ErrorCode::kInvalidArgument, "sp must lie in (0, 1)");
  std::vector<double> scores(dict.size(), 0.0);
  std::size_t starved = 0;
  if (params.selector == Selector::kCosine) {
    for (std::size_t i = 0; i < dict.size(); ++i) {
      scores[i] = std::clamp(cosine_similarity(test_pooled.values, dict.entry(i).pooled.values), 0.0, 1.0);
    }
  } else {
    if (test_sift == nullptr) throw Error(ErrorCode::kInvalidArgument, "SIFT-FLANN selection needs test SIFT features");
    for (std::size_t i = 0; i < dict.size(); ++i) {
      const FspResult f = fsp(*test_sift, dict.descriptor_index(i), params.alpha, params.search);
      scores[i] = f.value;
      if (f.descriptor_starved) ++starved;
    }
  }
  SelectionResult r = select_from_scores(std::move(scores), params.sp, params.fallback_k);
  r.selector = params.selector;
  r.starved_candidates = starved;
  return r;
}

double percent_data_saved(std::size_t selected, std::size_t total) {
  if (total == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(selected) / static_cast<double>(total));
}

}  // namespace adws
