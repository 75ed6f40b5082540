#include "scenefit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace scenefit::geometry {

namespace {

struct HullFace {
  std::array<int, 3> v;
  Vec3 normal;
  double offset;  // normal . x = offset on the plane
  std::vector<int> outside;
  bool alive = true;
};

class Quickhull {
 public:
  explicit Quickhull(const Points& points) : p_(points) {
    double scale = 0.0;
    for (const Vec3& x : p_) scale = std::max(scale, x.cwiseAbs().maxCoeff());
    eps_ = std::max(scale, 1e-300) * 1e-11;
  }

  ConvexHull run() {
    initial_simplex();
    while (true) {
      int f = -1;
      for (int i = next_; i < static_cast<int>(faces_.size()); ++i) {
        if (faces_[i].alive && !faces_[i].outside.empty()) {
          f = i;
          break;
        }
        if (i == next_) ++next_;
      }
      if (f < 0) break;
      expand(f);
    }
    ConvexHull hull;
    std::vector<char> used(p_.size(), 0);
    for (const HullFace& face : faces_) {
      if (!face.alive) continue;
      hull.faces.push_back({face.v[0], face.v[1], face.v[2]});
      for (int idx : face.v) used[idx] = 1;
    }
    for (std::size_t i = 0; i < used.size(); ++i) {
      if (used[i]) hull.vertices.push_back(static_cast<int>(i));
    }
    return hull;
  }

 private:
  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  double distance(const HullFace& f, int i) const { return f.normal.dot(p_[i]) - f.offset; }

  int add_face(int a, int b, int c) {
    HullFace f;
    f.v = {a, b, c};
    const Vec3 n = (p_[b] - p_[a]).cross(p_[c] - p_[a]);
    const double len = n.norm();
    f.normal = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    f.offset = f.normal.dot(p_[a]);
    faces_.push_back(std::move(f));
    const int id = static_cast<int>(faces_.size()) - 1;
    edges_[key(a, b)] = id;
    edges_[key(b, c)] = id;
    edges_[key(c, a)] = id;
    return id;
  }

  void initial_simplex() {
    const int n = static_cast<int>(p_.size());
    if (n < 4) throw DegenerateInput("convex hull needs at least 4 points");
    // Extreme points along each axis; keep the most distant pair.
    std::array<int, 6> ext{};
    for (int axis = 0; axis < 3; ++axis) {
      int lo = 0, hi = 0;
      for (int i = 1; i < n; ++i) {
        if (p_[i][axis] < p_[lo][axis]) lo = i;
        if (p_[i][axis] > p_[hi][axis]) hi = i;
      }
      ext[2 * axis] = lo;
      ext[2 * axis + 1] = hi;
    }
    int a = ext[0], b = ext[1];
    double best = -1.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = i + 1; j < 6; ++j) {
        const double d = (p_[ext[i]] - p_[ext[j]]).squaredNorm();
        if (d > best) {
          best = d;
          a = ext[i];
          b = ext[j];
        }
      }
    }
    if (std::sqrt(best) <= eps_) throw DegenerateInput("convex hull: all points coincide");

    const Vec3 dir = (p_[b] - p_[a]).normalized();
    int c = -1;
    best = eps_;
    for (int i = 0; i < n; ++i) {
      const Vec3 w = p_[i] - p_[a];
      const double d = (w - w.dot(dir) * dir).norm();
      if (d > best) {
        best = d;
        c = i;
      }
    }
    if (c < 0) throw DegenerateInput("convex hull: input points are collinear");

    const Vec3 plane_n = (p_[b] - p_[a]).cross(p_[c] - p_[a]).normalized();
    int d = -1;
    best = eps_;
    for (int i = 0; i < n; ++i) {
      const double dist = std::abs(plane_n.dot(p_[i] - p_[a]));
      if (dist > best) {
        best = dist;
        d = i;
      }
    }
    if (d < 0) throw DegenerateInput("convex hull: input points are coplanar");

    if (plane_n.dot(p_[d] - p_[a]) > 0.0) std::swap(b, c);  // d must lie below face (a,b,c)
    add_face(a, b, c);
    add_face(a, d, b);
    add_face(b, d, c);
    add_face(c, d, a);

    for (int i = 0; i < n; ++i) {
      if (i == a || i == b || i == c || i == d) continue;
      assign(i, 0, static_cast<int>(faces_.size()));
    }
  }

  // Attach point i to the face among [first, last) it is farthest outside of.
  void assign(int i, int first, int last) {
    int target = -1;
    double best = eps_;
    for (int f = first; f < last; ++f) {
      if (!faces_[f].alive) continue;
      const double dist = distance(faces_[f], i);
      if (dist > best) {
        best = dist;
        target = f;
      }
    }
    if (target >= 0) faces_[target].outside.push_back(i);
  }

  void expand(int start) {
    HullFace& seed = faces_[start];
    int eye = seed.outside.front();
    double far = distance(seed, eye);
    for (int i : seed.outside) {
      const double dist = distance(seed, i);
      if (dist > far) {
        far = dist;
        eye = i;
      }
    }

    // Flood-fill the faces visible from the eye point.
    std::vector<int> visible = {start};
    std::vector<char>& mark = mark_;
    mark.assign(faces_.size(), 0);
    mark[start] = 1;
    for (std::size_t q = 0; q < visible.size(); ++q) {
      const HullFace& f = faces_[visible[q]];
      for (int e = 0; e < 3; ++e) {
        const auto it = edges_.find(key(f.v[(e + 1) % 3], f.v[e]));
        if (it == edges_.end()) continue;
        const int nb = it->second;
        if (mark[nb] || !faces_[nb].alive) continue;
        if (distance(faces_[nb], eye) > eps_) {
          mark[nb] = 1;
          visible.push_back(nb);
        }
      }
    }

    std::vector<std::pair<int, int>> horizon;
    for (int fid : visible) {
      const HullFace& f = faces_[fid];
      for (int e = 0; e < 3; ++e) {
        const int u = f.v[e], w = f.v[(e + 1) % 3];
        const auto it = edges_.find(key(w, u));
        if (it == edges_.end() || !mark[it->second]) horizon.emplace_back(u, w);
      }
    }

    std::vector<int> orphans;
    for (int fid : visible) {
      HullFace& f = faces_[fid];
      f.alive = false;
      for (int e = 0; e < 3; ++e) {
        const auto it = edges_.find(key(f.v[e], f.v[(e + 1) % 3]));
        if (it != edges_.end() && it->second == fid) edges_.erase(it);
      }
      for (int i : f.outside) {
        if (i != eye) orphans.push_back(i);
      }
      f.outside.clear();
      f.outside.shrink_to_fit();
    }

    const int first = static_cast<int>(faces_.size());
    for (const auto& [u, w] : horizon) add_face(u, w, eye);
    const int last = static_cast<int>(faces_.size());
    for (int i : orphans) assign(i, first, last);
  }

  const Points& p_;
  double eps_;
  std::vector<HullFace> faces_;
  std::unordered_map<std::uint64_t, int> edges_;
  std::vector<char> mark_;
  int next_ = 0;
};

}  // namespace

ConvexHull convex_hull_3d(const Points& points) {
  if (points.size() < 4) throw DegenerateInput("convex hull needs at least 4 points");
  if (!all_finite(points)) throw DegenerateInput("convex hull input is not finite");
  return Quickhull(points).run();
}

}  // namespace scenefit::geometry
