#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "lig/common.hpp"

namespace lig {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0;  // Euclidean
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static 3-d tree over a point set. Results are identical to a brute-force scan:
/// the closest point wins, ties go to the lowest index.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Point3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    if (!points_.empty()) build(0, points_.size(), 0);
  }

  template <class Range, class Proj>
  static KdTree from(const Range& items, Proj proj) {
    std::vector<Point3> pts;
    pts.reserve(std::size(items));
    for (const auto& it : items) pts.push_back(proj(it));
    return KdTree(std::move(pts));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Point3>& points() const { return points_; }

  Neighbor nearest(const Point3& q) const {
    if (points_.empty()) throw InvalidArgument("nearest neighbor query on an empty point set");
    Best best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
    search_one(0, points_.size(), q, best);
    return {best.index, std::sqrt(best.d2)};
  }

  /// k nearest, sorted by (distance, index). Returns min(k, size) entries.
  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const {
    if (points_.empty()) throw InvalidArgument("nearest neighbor query on an empty point set");
    k = std::min(k, points_.size());
    std::vector<Best> heap;  // max-heap on (d2, index)
    heap.reserve(k + 1);
    search_k(0, points_.size(), q, k, heap);
    std::sort(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const Best& b : heap) out.push_back({b.index, std::sqrt(b.d2)});
    return out;
  }

 private:
  static constexpr std::size_t kLeaf = 8;

  struct Node {
    double split = 0;
    int axis = -1;  // -1 for leaf
  };

  struct Best {
    double d2;
    std::size_t index;
    bool operator<(const Best& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
  };

  // Internal node of range [lo, hi) is stored at nodes_[mid]; mids of distinct ranges never collide.
  void build(std::size_t lo, std::size_t hi, int depth) {
    if (hi - lo <= kLeaf) return;
    Point3 mn = points_[order_[lo]], mx = mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    nodes_.resize(std::max(nodes_.size(), mid + 1));
    nodes_[mid] = {points_[order_[mid]][axis], axis};
    build(lo, mid, depth + 1);
    build(mid, hi, depth + 1);
  }

  void consider(std::uint32_t idx, const Point3& q, Best& best) const {
    const Best cand{squared_distance(points_[idx], q), idx};
    if (cand < best) best = cand;
  }

  void search_one(std::size_t lo, std::size_t hi, const Point3& q, Best& best) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) consider(order_[i], q, best);
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const Node& n = nodes_[mid];
    const double diff = q[n.axis] - n.split;
    // Left half holds coords <= split, right half coords >= split.
    if (diff < 0) {
      search_one(lo, mid, q, best);
      if (diff * diff <= best.d2) search_one(mid, hi, q, best);
    } else {
      search_one(mid, hi, q, best);
      if (diff * diff <= best.d2) search_one(lo, mid, q, best);
    }
  }

  void push_k(std::uint32_t idx, const Point3& q, std::size_t k, std::vector<Best>& heap) const {
    const Best cand{squared_distance(points_[idx], q), idx};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search_k(std::size_t lo, std::size_t hi, const Point3& q, std::size_t k, std::vector<Best>& heap) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) push_k(order_[i], q, k, heap);
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const Node& n = nodes_[mid];
    const double diff = q[n.axis] - n.split;
    auto bound = [&] { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().d2; };
    if (diff < 0) {
      search_k(lo, mid, q, k, heap);
      if (diff * diff <= bound()) search_k(mid, hi, q, k, heap);
    } else {
      search_k(mid, hi, q, k, heap);
      if (diff * diff <= bound()) search_k(lo, mid, q, k, heap);
    }
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Nearest neighbor of q in cloud by brute-force-equivalent search.
inline Neighbor nearest_neighbor(const Point3& query, std::span<const Point3> cloud) {
  if (cloud.empty()) throw InvalidArgument("nearest neighbor query on an empty point set");
  KdTree tree(std::vector<Point3>(cloud.begin(), cloud.end()));
  return tree.nearest(query);
}

}  // namespace lig
