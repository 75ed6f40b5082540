#include "scenefit/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace scenefit::geometry {

namespace {
constexpr int kLeafSize = 8;

bool better(double d2, int index, const NeighborIndex::Hit& best) {
  return best.index < 0 || d2 < best.squared_distance ||
         (d2 == best.squared_distance && index < best.index);
}
}  // namespace

NeighborIndex::NeighborIndex(Points points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int NeighborIndex::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  // Left holds coordinates <= split, right holds coordinates >= split; the
  // split is an actual coordinate so plane distances bound point distances.
  const double split = points_[order_[mid]][axis];
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void NeighborIndex::search(int node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = squared_distance(q, points_[idx]);
      if (better(d2, idx, best)) best = Hit{idx, d2};
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

NeighborIndex::Hit NeighborIndex::nearest(const Vec3& query) const {
  if (points_.empty()) throw std::logic_error("nearest: empty neighbor index");
  Hit best;
  search(0, query, best);
  return best;
}

void NeighborIndex::collect(int node_id, const Vec3& q, double r2, std::vector<int>& out) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      if (squared_distance(q, points_[order_[i]]) <= r2) out.push_back(order_[i]);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  if (diff <= 0.0 || diff * diff <= r2) collect(node.left, q, r2, out);
  if (diff >= 0.0 || diff * diff <= r2) collect(node.right, q, r2, out);
}

std::vector<int> NeighborIndex::within_radius(const Vec3& query, double radius) const {
  std::vector<int> out;
  if (points_.empty() || radius < 0.0) return out;
  collect(0, query, radius * radius, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace scenefit::geometry
