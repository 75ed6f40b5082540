#include "scenefit/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace scenefit::geometry {

Points Similarity::apply(const Points& points) const {
  Points out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(apply(p));
  return out;
}

RigidTransform Similarity::rigid(Frame source, Frame target) const {
  if (std::abs(scale - 1.0) > 1e-12) throw ValidationError("similarity with scale != 1 is not rigid");
  return RigidTransform::from_parts(rotation, translation, source, target);
}

Similarity kabsch(const Points& source, const Points& target, bool with_scale,
                  bool allow_degenerate) {
  if (source.size() != target.size()) {
    throw std::invalid_argument("kabsch: source and target sizes differ");
  }
  const std::size_t n = source.size();
  if (n < 3 && !allow_degenerate) throw DegenerateInput("kabsch needs at least 3 point pairs");
  if (n == 0) throw DegenerateInput("kabsch needs at least one point pair");

  Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += source[i];
    mu_t += target[i];
  }
  mu_s /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s = source[i] - mu_s;
    const Vec3 t = target[i] - mu_t;
    cov += t * s.transpose();
    scatter += s * s.transpose();
    var_s += s.squaredNorm();
  }

  if (!allow_degenerate) {
    const Eigen::JacobiSVD<Mat3> spread(scatter);
    const auto sv = spread.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-20 * sv(0) || sv(1) < 1e-24) {
      throw DegenerateInput("kabsch: source points are collinear or coincident");
    }
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  if (with_scale) {
    if (var_s <= 0.0) throw DegenerateInput("kabsch: zero source variance");
    out.scale = (svd.singularValues().asDiagonal() * d).trace() / var_s;
  }
  out.translation = mu_t - out.scale * (out.rotation * mu_s);
  return out;
}

double alignment_residual(const Similarity& alignment, const Points& source, const Points& target) {
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    sum += squared_distance(alignment.apply(source[i]), target[i]);
  }
  return sum;
}

// ---------------------------------------------------------------------------

IcpResult icp(const Points& source, const Points& target, const IcpConfig& config) {
  if (target.size() < 3) throw DegenerateInput("icp: target cloud needs at least 3 points");
  return icp(source, NeighborIndex(target), config);
}

IcpResult icp(const Points& source, const NeighborIndex& target, const IcpConfig& config) {
  if (source.size() < 3 || target.size() < 3) {
    throw DegenerateInput("icp: both clouds need at least 3 points");
  }
  if (!(config.trim_fraction >= 0.0 && config.trim_fraction < 1.0)) {
    throw std::invalid_argument("icp: trim_fraction must lie in [0, 1)");
  }
  const std::size_t n = source.size();
  const std::size_t keep = std::max<std::size_t>(
      3, n - static_cast<std::size_t>(std::floor(config.trim_fraction * static_cast<double>(n))));

  Similarity current;
  if (config.init_centroids) {
    Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
    for (const Vec3& p : source) mu_s += p;
    for (const Vec3& p : target.points()) mu_t += p;
    current.translation = mu_t / static_cast<double>(target.size()) - mu_s / static_cast<double>(n);
  }

  IcpResult result;
  result.transform = current;
  result.residual = std::numeric_limits<double>::infinity();

  std::vector<std::pair<double, int>> residuals(n);
  std::vector<int> match(n);
  Points src_kept, tgt_kept;
  double previous = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= config.max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto hit = target.nearest(current.apply(source[i]));
      match[i] = hit.index;
      residuals[i] = {hit.squared_distance, static_cast<int>(i)};
    }
    std::partial_sort(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(keep),
                      residuals.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) sum += residuals[i].first;
    const double rms = std::sqrt(sum / static_cast<double>(keep));
    if (!std::isfinite(rms)) break;
    result.residual_history.push_back(rms);
    if (rms < result.residual) {
      result.residual = rms;
      result.transform = current;
    }
    result.iterations = iter;
    if (previous - rms < config.tol || iter == config.max_iters) {
      result.converged = previous - rms < config.tol;
      break;
    }
    previous = rms;

    src_kept.clear();
    tgt_kept.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      const int s = residuals[i].second;
      src_kept.push_back(source[s]);
      tgt_kept.push_back(target.point(match[s]));
    }
    try {
      current = kabsch(src_kept, tgt_kept, false);
    } catch (const DegenerateInput&) {
      current = kabsch(src_kept, tgt_kept, false, true);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<int> hpr(const Points& points, const Vec3& viewpoint, double gamma) {
  if (points.size() < 4) throw DegenerateInput("hpr needs at least 4 points");
  if (!std::isfinite(gamma)) throw std::invalid_argument("hpr: gamma must be finite");
  double max_norm = 0.0;
  Points shifted(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    shifted[i] = points[i] - viewpoint;
    const double r = shifted[i].norm();
    if (r <= 0.0) throw DegenerateInput("hpr: viewpoint coincides with an input point");
    max_norm = std::max(max_norm, r);
  }
  const double radius = std::pow(10.0, gamma) * max_norm;

  Points flipped;
  flipped.reserve(points.size() + 1);
  for (const Vec3& p : shifted) {
    const double r = p.norm();
    flipped.push_back(p + 2.0 * (radius - r) * p / r);
  }
  flipped.push_back(Vec3::Zero());

  const ConvexHull hull = convex_hull_3d(flipped);
  std::vector<int> visible;
  const int origin = static_cast<int>(points.size());
  for (int idx : hull.vertices) {
    if (idx != origin) visible.push_back(idx);
  }
  return visible;
}

// ---------------------------------------------------------------------------

double one_sided_chamfer(const Points& from, const NeighborIndex& to) {
  if (from.empty() || to.empty()) throw std::invalid_argument("chamfer: empty cloud");
  double sum = 0.0;
  for (const Vec3& p : from) sum += to.nearest(p).squared_distance;
  return sum / static_cast<double>(from.size());
}

double chamfer(const Points& a, const Points& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty cloud");
  const NeighborIndex ia(a), ib(b);
  return one_sided_chamfer(a, ib) + one_sided_chamfer(b, ia);
}

SceneIndex::SceneIndex(const SceneMesh& mesh) : mesh_(&mesh), index_(mesh.vertices) {
  if (mesh.vertices.empty()) throw ValidationError("scene mesh has no vertices");
  if (mesh.normals.size() != mesh.vertices.size()) {
    throw ValidationError("scene mesh needs one normal per vertex");
  }
}

double SceneIndex::penetration_depth(const Vec3& v) const {
  const auto hit = index_.nearest(v);
  return (v - mesh_->vertices[hit.index]).dot(mesh_->normals[hit.index]);
}

double penetration_depth(const Vec3& v, const SceneMesh& mesh) {
  return SceneIndex(mesh).penetration_depth(v);
}

}  // namespace scenefit::geometry
