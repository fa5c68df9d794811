// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/descriptor_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "adws/error.hpp"

namespace adws {

float squared_distance(const Descriptor& a, const Descriptor& b) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const float d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

DescriptorIndex::DescriptorIndex(std::span<const Descriptor> descriptors, int leaf_size)
    : points_(descriptors.begin(), descriptors.end()), leaf_size_(leaf_size) {
  if (leaf_size_ < 1) throw Error(ErrorCode::kInvalidArgument, "leaf size must be >= 1");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<int>(points_.size()));
  }
}

int DescriptorIndex::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= leaf_size_) return id;

  // Highest-variance dimension over the node's points.
  std::array<double, 128> mean{};
  std::array<double, 128> sq{};
  for (int i = begin; i < end; ++i) {
    const Descriptor& p = points_[order_[i]];
    for (int k = 0; k < 128; ++k) {
      mean[k] += p[k];
      sq[k] += static_cast<double>(p[k]) * p[k];
    }
  }
  const double count = end - begin;
  int best_dim = 0;
  double best_var = -1.0;
  for (int k = 0; k < 128; ++k) {
    const double m = mean[k] / count;
    const double var = sq[k] / count - m * m;
    if (var > best_var) {
      best_var = var;
      best_dim = k;
    }
  }

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const float va = points_[a][best_dim];
    const float vb = points_[b][best_dim];
    return va < vb || (va == vb && a < b);
  });
  const float split = points_[order_[mid]][best_dim];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[id];
  node.split_dim = best_dim;
  node.split_value = split;
  node.left = left;
  node.right = right;
  return id;
}

namespace {

struct Best2 {
  float d1 = std::numeric_limits<float>::infinity();
  float d2 = std::numeric_limits<float>::infinity();
  std::size_t i1 = 0;
  std::size_t i2 = 0;

  void offer(float d, std::size_t i) {
    if (d < d1 || (d == d1 && i < i1)) {
      d2 = d1;
      i2 = i1;
      d1 = d;
      i1 = i;
    } else if (d < d2 || (d == d2 && i < i2)) {
      d2 = d;
      i2 = i;
    }
  }
};

}  // namespace

Knn2 DescriptorIndex::knn2(const Descriptor& query, const SearchParams& params) const {
  if (points_.size() < 2) throw Error(ErrorCode::kTooFewDescriptors, "index holds fewer than two descriptors");

  Best2 best;
  int examined = 0;
  const auto scan_leaf = [&](const Node& leaf) {
    for (int i = leaf.begin; i < leaf.end; ++i) {
      const int p = order_[i];
      best.offer(squared_distance(points_[p], query), static_cast<std::size_t>(p));
    }
    examined += leaf.end - leaf.begin;
  };

  if (params.mode == SearchMode::kExact) {
    // Depth-first branch and bound against the current second-best distance.
    struct Frame {
      int node;
      float bound;
    };
    std::vector<Frame> stack{{0, 0.0f}};
    while (!stack.empty()) {
      const Frame f = stack.back();
      stack.pop_back();
      if (f.bound > best.d2) continue;
      const Node* node = &nodes_[f.node];
      while (node->split_dim >= 0) {
        const float diff = query[node->split_dim] - node->split_value;
        const int near = diff < 0.0f ? node->left : node->right;
        const int far = diff < 0.0f ? node->right : node->left;
        stack.push_back({far, std::max(f.bound, diff * diff)});
        node = &nodes_[near];
      }
      scan_leaf(*node);
    }
  } else {
    // Best-bin-first: visit leaves in order of their split-plane lower bound
    // until `checks` points have been compared.
    struct Branch {
      float bound;
      int node;
      bool operator>(const Branch& o) const { return bound > o.bound || (bound == o.bound && node > o.node); }
    };
    std::priority_queue<Branch, std::vector<Branch>, std::greater<>> queue;
    queue.push({0.0f, 0});
    const int checks = std::max(params.checks, 2);
    while (!queue.empty()) {
      const Branch b = queue.top();
      queue.pop();
      if (b.bound > best.d2) break;
      if (examined >= checks && examined >= 2) break;
      const Node* node = &nodes_[b.node];
      while (node->split_dim >= 0) {
        const float diff = query[node->split_dim] - node->split_value;
        const int near = diff < 0.0f ? node->left : node->right;
        const int far = diff < 0.0f ? node->right : node->left;
        queue.push({std::max(b.bound, diff * diff), far});
        node = &nodes_[near];
      }
      scan_leaf(*node);
    }
  }
  return {std::sqrt(best.d1), std::sqrt(best.d2), best.i1, best.i2};
}

}  // namespace adws
