#include "scenefit/calib.hpp"

#include "scenefit/body.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace scenefit::calib {

void CalibrationInput::validate() const {
  if (!ground_normal.allFinite() || !plane_normal.allFinite() || !std::isfinite(lidar_height)) {
    throw ValidationError("calibration input is not finite");
  }
  if (std::abs(ground_normal.norm() - 1.0) > 1e-6) {
    throw ValidationError("ground normal g must be unit length");
  }
  if (std::abs(plane_normal.norm() - 1.0) > 1e-6) {
    throw ValidationError("plane normal m must be unit length");
  }
  if (std::abs(ground_normal.dot(plane_normal)) >= 0.99) {
    throw ValidationError("plane normal m and ground normal g are (nearly) parallel");
  }
}

LidarCalibration coarse_calibration_lidar(const CalibrationInput& input, double forward_offset) {
  input.validate();
  const Vec3& g = input.ground_normal;
  const Vec3& m = input.plane_normal;

  Mat3 raw;
  raw.row(0) = m.cross(g).normalized().transpose();
  raw.row(1) = m.transpose();
  raw.row(2) = g.transpose();

  LidarCalibration out;
  out.raw_deviation = orthonormality_error(raw);

  Mat3 rotation = raw;
  if (out.raw_deviation > 0.0) {
    // Real plane estimates are never exactly orthogonal: keep g, project it out of m.
    const Vec3 gu = g.normalized();
    const Vec3 mu = (m - m.dot(gu) * gu).normalized();
    rotation.row(0) = mu.cross(gu).normalized().transpose();
    rotation.row(1) = mu.transpose();
    rotation.row(2) = gu.transpose();
    rotation = nearest_rotation(rotation);
  }
  out.deviation = orthonormality_error(rotation);
  out.transform = RigidTransform::from_parts(rotation, Vec3(0.0, forward_offset, input.lidar_height),
                                             Frame::kLidar, Frame::kWorld);
  return out;
}

RigidTransform coarse_calibration_imu() {
  Mat4 m = Mat4::Zero();
  m(0, 0) = -1.0;
  m(1, 2) = 1.0;
  m(2, 1) = 1.0;
  m(3, 3) = 1.0;
  // (1,1)=-1 with the y/z swap has det +1.
  return RigidTransform::from_matrix(m, Frame::kImu, Frame::kWorld);
}

MotionSequence transform_motion(const RigidTransform& transform, const MotionSequence& motion,
                                const Vec3& root_rest) {
  require_same_frame(motion.frame, transform.source(), "transform_motion");
  MotionSequence out = motion;
  out.frame = transform.target();
  const Mat3 r = transform.rotation();
  const Vec3 t = transform.translation();
  for (std::size_t k = 0; k < motion.size(); ++k) {
    const auto [tr, root] = body::transform_root(r, t, motion.translation[k], motion.pose[k][0], root_rest);
    out.translation[k] = tr;
    out.pose[k][0] = root;
  }
  return out;
}

MotionSequence world_from_camera(const RigidTransform& world_to_camera,
                                 const MotionSequence& motion_in_camera, const Vec3& root_rest) {
  require_same_frame(motion_in_camera.frame, Frame::kCamera, "world_from_camera motion");
  require_same_frame(world_to_camera.source(), Frame::kWorld, "world_from_camera extrinsic source");
  require_same_frame(world_to_camera.target(), Frame::kCamera, "world_from_camera extrinsic target");
  return transform_motion(world_to_camera.inverse(), motion_in_camera, root_rest);
}

MotionSequence camera_from_world(const RigidTransform& world_to_camera,
                                 const MotionSequence& motion_in_world, const Vec3& root_rest) {
  require_same_frame(world_to_camera.source(), Frame::kWorld, "camera_from_world extrinsic source");
  require_same_frame(world_to_camera.target(), Frame::kCamera, "camera_from_world extrinsic target");
  return transform_motion(world_to_camera, motion_in_world, root_rest);
}

PlaneFit fit_plane_ransac(const Points& points, const RansacConfig& config) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw DegenerateInput("plane fit needs at least 3 points");
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  int best_count = 0;
  Vec3 best_normal = Vec3::UnitZ();
  double best_offset = 0.0;
  for (int it = 0; it < config.iterations; ++it) {
    const int a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const Vec3 normal = (points[b] - points[a]).cross(points[c] - points[a]);
    const double len = normal.norm();
    if (len < 1e-12) continue;
    const Vec3 unit = normal / len;
    const double offset = unit.dot(points[a]);
    int count = 0;
    for (const Vec3& p : points) {
      if (std::abs(unit.dot(p) - offset) <= config.inlier_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_normal = unit;
      best_offset = offset;
    }
  }
  if (best_count < 3) throw DegenerateInput("RANSAC found no plane supported by 3 points");

  // Least-squares refit on the consensus set.
  Vec3 mean = Vec3::Zero();
  std::vector<int> inliers;
  for (int i = 0; i < n; ++i) {
    if (std::abs(best_normal.dot(points[i]) - best_offset) <= config.inlier_threshold) {
      inliers.push_back(i);
      mean += points[i];
    }
  }
  mean /= static_cast<double>(inliers.size());
  Mat3 cov = Mat3::Zero();
  for (int i : inliers) cov += (points[i] - mean) * (points[i] - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 normal = eig.eigenvectors().col(0);
  if (normal.dot(best_normal) < 0.0) normal = -normal;

  PlaneFit fit;
  fit.normal = normal;
  fit.offset = normal.dot(mean);
  for (int i = 0; i < n; ++i) {
    if (std::abs(normal.dot(points[i]) - fit.offset) <= config.inlier_threshold) fit.inliers.push_back(i);
  }
  return fit;
}

}  // namespace scenefit::calib
