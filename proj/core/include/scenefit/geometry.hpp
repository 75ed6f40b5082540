#pragma once

#include "scenefit/core.hpp"

#include <vector>

namespace scenefit::geometry {

/// Exact nearest-neighbour index over a fixed point set (k-d tree).
/// Ties are broken by the lowest point index, so results match a linear scan.
class NeighborIndex {
 public:
  struct Hit {
    int index = -1;
    double squared_distance = 0.0;
  };

  NeighborIndex() = default;
  explicit NeighborIndex(Points points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const Points& points() const { return points_; }
  const Vec3& point(int i) const { return points_[i]; }

  /// Throws std::logic_error on an empty index.
  Hit nearest(const Vec3& query) const;

  /// Indices of all points with distance <= radius, ascending.
  std::vector<int> within_radius(const Vec3& query, double radius) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, Hit& best) const;
  void collect(int node, const Vec3& q, double r2, std::vector<int>& out) const;

  Points points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Squared Euclidean distance evaluated in a fixed order (used by the index and
/// by every brute-force comparison so results agree bit for bit).
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

// ---------------------------------------------------------------------------
// Alignment

/// x -> scale * rotation * x + translation
struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  Points apply(const Points& points) const;
  RigidTransform rigid(Frame source, Frame target) const;
};

/// Least-squares rigid (or similarity) alignment of source onto target
/// (Kabsch / Umeyama). Throws DegenerateInput for fewer than 3 pairs or a
/// rank < 2 configuration unless `allow_degenerate` is set, in which case an
/// arbitrary minimizer is returned.
Similarity kabsch(const Points& source, const Points& target, bool with_scale,
                  bool allow_degenerate = false);

/// Sum of squared residuals of `alignment` over the pairs.
double alignment_residual(const Similarity& alignment, const Points& source, const Points& target);

struct IcpConfig {
  int max_iters = 50;
  double tol = 1e-6;             // meters, on the trimmed RMS residual
  double trim_fraction = 0.1;    // worst fraction of pairs dropped each iteration
  bool init_centroids = true;    // start from centroid alignment instead of identity
};

struct IcpResult {
  Similarity transform;          // maps source onto target; scale fixed at 1
  double residual = 0.0;         // trimmed RMS residual of the returned transform
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

/// Trimmed point-to-point ICP. Returns the best transform seen.
IcpResult icp(const Points& source, const Points& target, const IcpConfig& config = {});
IcpResult icp(const Points& source, const NeighborIndex& target, const IcpConfig& config = {});

// ---------------------------------------------------------------------------
// Convex hull and visibility

struct ConvexHull {
  std::vector<int> vertices;  // ascending input indices
  std::vector<Face> faces;    // counter-clockwise seen from outside
};

/// Quickhull. Throws DegenerateInput for fewer than 4 points or (near-)coplanar input.
ConvexHull convex_hull_3d(const Points& points);

/// Hidden point removal by spherical flipping. Returns ascending indices of
/// points visible from `viewpoint`; R = 10^gamma * max distance to the viewpoint.
std::vector<int> hpr(const Points& points, const Vec3& viewpoint, double gamma = 2.0);

// ---------------------------------------------------------------------------
// Distances

/// Mean over `from` of the squared distance to the nearest point of `to`.
double one_sided_chamfer(const Points& from, const NeighborIndex& to);

/// Two-sided normalized Chamfer distance (m^2). Throws std::invalid_argument on empty input.
double chamfer(const Points& a, const Points& b);

/// Scene mesh with a nearest-vertex index; penetration depth follows the
/// nearest-vertex convention: eta(v) = (v - q) . n_q, negative inside.
class SceneIndex {
 public:
  explicit SceneIndex(const SceneMesh& mesh);

  const SceneMesh& mesh() const { return *mesh_; }
  const NeighborIndex& index() const { return index_; }

  double penetration_depth(const Vec3& v) const;

 private:
  const SceneMesh* mesh_;
  NeighborIndex index_;
};

double penetration_depth(const Vec3& v, const SceneMesh& mesh);

}  // namespace scenefit::geometry
