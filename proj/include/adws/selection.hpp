// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adws/backbone.hpp"
#include "adws/descriptor_index.hpp"
#include "adws/ingest.hpp"
#include "adws/sift.hpp"

namespace adws {

struct DictionaryEntry {
  std::string image_id;
  std::string path;
  EmbeddingVector pooled;
  FeatureMap feature_map;
  SiftFeatureSet sift;  // descriptors already storage-quantized
};

/// Training-set index: per image, pooled embedding, feature map and SIFT set.
/// Immutable once constructed; descriptor KD-trees are built eagerly.
class FeatureDictionary {
 public:
  FeatureDictionary(std::string model_id, std::uint64_t sift_config_hash, std::vector<DictionaryEntry> entries);

  const std::string& model_id() const { return model_id_; }
  std::uint64_t sift_config_hash() const { return sift_config_hash_; }
  std::span<const DictionaryEntry> entries() const { return entries_; }
  const DictionaryEntry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  FeatureShape feature_shape() const;

  /// nullptr when the entry has fewer than two descriptors.
  const DescriptorIndex* descriptor_index(std::size_t i) const;

  /// Throws kBackboneMismatch when either tag differs.
  void check_compatible(std::string_view model_id, std::uint64_t sift_config_hash) const;

 private:
  std::string model_id_;
  std::uint64_t sift_config_hash_;
  std::vector<DictionaryEntry> entries_;
  std::vector<std::optional<DescriptorIndex>> indices_;
};

/// Persisted fields only; octave bookkeeping of keypoints is not stored.
bool equivalent(const FeatureDictionary& a, const FeatureDictionary& b);

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const std::string& id)>;

DictionaryEntry make_dictionary_entry(std::string image_id, std::string path, const Image& img,
                                      const Backbone& backbone, const SiftConfig& cfg);

FeatureDictionary build_dictionary(const DatasetIndex& index, const Backbone& backbone, const SiftConfig& cfg,
                                   const ProgressFn& progress = {});

/// Writes the binary dictionary and a JSON manifest at `path` + ".json".
void save_dictionary(const FeatureDictionary& dict, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_dictionary(const FeatureDictionary& dict);
FeatureDictionary deserialize_dictionary(std::span<const std::uint8_t> bytes);
FeatureDictionary load_dictionary(const std::filesystem::path& path);
/// As above, rejecting dictionaries built with another backbone.
FeatureDictionary load_dictionary(const std::filesystem::path& path, std::string_view expected_model_id);
std::string dictionary_manifest_json(const FeatureDictionary& dict);

// --- similarity -------------------------------------------------------------

/// Lowe's test: d1 < alpha * d2, and never for d2 == 0.
bool ratio_test(double d1, double d2, double alpha);

struct FspResult {
  double value = 0.0;
  std::size_t good = 0;
  std::size_t total = 0;
  bool descriptor_starved = false;
};

/// Fraction of `test` descriptors whose 2-NN query against `train` passes
/// the ratio test. Descriptor-starved inputs give 0 with the flag set.
FspResult fsp(const SiftFeatureSet& test, const DescriptorIndex* train, double alpha,
              const SearchParams& params = {});
FspResult fsp(const SiftFeatureSet& test, const SiftFeatureSet& train, double alpha,
              const SearchParams& params = {});

/// Cosine of the angle between a and b; 0 if either is the zero vector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

enum class Selector { kCosine, kSiftFlann };

std::string_view to_string(Selector s);
Selector parse_selector(std::string_view name);
double default_sp(Selector s);

struct SelectionParams {
  Selector selector = Selector::kCosine;
  double sp = 0.75;
  double alpha = 0.7;
  std::size_t fallback_k = 5;
  SearchParams search{SearchMode::kApproximate, 64};
};

struct SelectionResult {
  Selector selector = Selector::kCosine;
  double sp = 0.0;
  std::vector<double> scores;  // one per dictionary entry, in [0, 1]
  std::vector<std::size_t> selected;  // entry indices, ascending
  bool fallback_used = false;
  std::size_t starved_candidates = 0;

  std::vector<std::string> selected_ids(const FeatureDictionary& dict) const;
};

/// Scores every entry and keeps those with score >= sp; when none qualify,
/// keeps the top fallback_k by score instead.
SelectionResult select_subset(const FeatureDictionary& dict, const EmbeddingVector& test_pooled,
                              const SiftFeatureSet* test_sift, const SelectionParams& params);

/// Selection from precomputed scores, shared by both selectors.
SelectionResult select_from_scores(std::vector<double> scores, double sp, std::size_t fallback_k);

double percent_data_saved(std::size_t selected, std::size_t total);

}  // namespace adws
