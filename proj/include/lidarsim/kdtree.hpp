// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

/**
 * Static 3D k-d tree over a copy of the input points. All queries are
 * exact; equal distances are resolved toward the smaller point index so
 * results do not depend on tree layout.
 */
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double sq_distance;
  };

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec3>& points() const noexcept { return points_; }

  /// Requires a non-empty tree.
  Neighbor nearest(const Vec3& query) const;

  /// Up to k neighbors sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  /// Indices with distance <= radius, ascending.
  std::vector<std::size_t> radius_search(const Vec3& query, double radius) const;

  std::size_t count_within(const Vec3& query, double radius) const;

 private:
  struct Node {
    // Leaf when `axis` < 0: points order_[begin, end).
    int axis = -1;
    double split = 0.0;
    std::size_t begin = 0, end = 0;
    std::size_t left = 0, right = 0;
    Vec3 lo, hi;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  static double box_sq_distance(const Node& n, const Vec3& q);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace lidarsim
