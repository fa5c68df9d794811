// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adws/sift.hpp"

namespace adws {

enum class SearchMode { kExact, kApproximate };

struct SearchParams {
  SearchMode mode = SearchMode::kExact;
  int checks = 64;  // leaf points visited in approximate mode
};

struct Knn2 {
  float d1 = 0.0f;
  float d2 = 0.0f;
  std::size_t i1 = 0;
  std::size_t i2 = 0;
};

/// KD-tree over 128-d descriptors. Splits on the highest-variance dimension
/// at the median; leaves hold at most `leaf_size` points.
class DescriptorIndex {
 public:
  static constexpr int kDefaultLeafSize = 16;

  explicit DescriptorIndex(std::span<const Descriptor> descriptors, int leaf_size = kDefaultLeafSize);

  std::size_t size() const { return points_.size(); }
  int leaf_size() const { return leaf_size_; }

  /// Two nearest neighbours by Euclidean distance, d1 <= d2. Exact mode is
  /// equivalent to a brute-force scan.
  Knn2 knn2(const Descriptor& query, const SearchParams& params = {}) const;

 private:
  struct Node {
    int split_dim = -1;  // -1 for leaves
    float split_value = 0.0f;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };

  int build(int begin, int end);

  std::vector<Descriptor> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

float squared_distance(const Descriptor& a, const Descriptor& b);

}  // namespace adws
