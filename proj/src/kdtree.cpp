// SPDX-License-Identifier: Apache-2.0
#include "lidarsim/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

#include "lidarsim/error.hpp"

namespace lidarsim {
namespace {

constexpr std::size_t kLeafSize = 12;

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.sq_distance < b.sq_distance ||
         (a.sq_distance == b.sq_distance && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.emplace_back();
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  int axis;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::box_sq_distance(const Node& n, const Vec3& q) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    double d = 0.0;
    if (q[k] < n.lo[k]) d = n.lo[k] - q[k];
    else if (q[k] > n.hi[k]) d = q[k] - n.hi[k];
    s += d * d;
  }
  return s;
}

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw DomainError("nearest-neighbor query on an empty tree");
  return knn(query, 1).front();
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec3& query, std::size_t k) const {
  std::vector<Neighbor> best;
  if (points_.empty() || k == 0) return best;
  k = std::min(k, points_.size());
  // Max-heap on (distance, index) holding the current k best.
  auto worse = [](const Neighbor& a, const Neighbor& b) { return closer(a, b); };
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (heap.size() == k && box_sq_distance(n, query) > heap.top().sq_distance) continue;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        Neighbor cand{idx, (points_[idx] - query).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (closer(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      continue;
    }
    // Visit the near side first (pushed last).
    if (query[n.axis] < n.split) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  best.resize(heap.size());
  for (std::size_t i = best.size(); i-- > 0;) {
    best[i] = heap.top();
    heap.pop();
  }
  return best;
}

std::vector<std::size_t> KdTree::radius_search(const Vec3& query, double radius) const {
  std::vector<std::size_t> out;
  if (points_.empty()) return out;
  const double r2 = radius * radius;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_sq_distance(n, query) > r2) continue;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if ((points_[idx] - query).squaredNorm() <= r2) out.push_back(idx);
      }
      continue;
    }
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t KdTree::count_within(const Vec3& query, double radius) const {
  std::size_t count = 0;
  if (points_.empty()) return count;
  const double r2 = radius * radius;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_sq_distance(n, query) > r2) continue;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if ((points_[order_[i]] - query).squaredNorm() <= r2) ++count;
      }
      continue;
    }
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
  return count;
}

}  // namespace lidarsim
