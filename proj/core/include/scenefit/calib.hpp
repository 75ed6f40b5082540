#pragma once

#include "scenefit/core.hpp"

#include <cstdint>
#include <vector>

namespace scenefit::calib {

/// Ground normal g, wall/column face normal m, LiDAR height above ground h.
struct CalibrationInput {
  Vec3 ground_normal = Vec3::UnitZ();
  Vec3 plane_normal = Vec3::UnitY();
  double lidar_height = 0.0;

  /// Unit normals within 1e-6, |g . m| < 0.99, finite height.
  void validate() const;
};

/// Forward offset in the translation column of the LiDAR calibration matrix.
inline constexpr double kDefaultForwardOffset = 0.2;

struct LidarCalibration {
  RigidTransform transform{Frame::kLidar, Frame::kWorld};
  /// Orthonormality error of the raw (e, m, g) rows before correction.
  double raw_deviation = 0.0;
  /// Orthonormality error of the returned rotation block.
  double deviation = 0.0;
};

/// Rotation rows e = m x g (normalized), m, g; translation (0, offset, h).
LidarCalibration coarse_calibration_lidar(const CalibrationInput& input,
                                          double forward_offset = kDefaultForwardOffset);

/// Constant IMU -> WORLD axis permutation.
RigidTransform coarse_calibration_imu();

/// Lifts a CAMERA-frame motion to WORLD through the inverse of `world_to_camera`.
/// Root orientation and translation are pre-composed; joint-local rotations are
/// untouched. `root_rest` is the rest position of the root joint (the pivot of
/// the root rotation); the synthetic template has it at the origin.
MotionSequence world_from_camera(const RigidTransform& world_to_camera,
                                 const MotionSequence& motion_in_camera,
                                 const Vec3& root_rest = Vec3::Zero());

/// Inverse of world_from_camera.
MotionSequence camera_from_world(const RigidTransform& world_to_camera,
                                 const MotionSequence& motion_in_world,
                                 const Vec3& root_rest = Vec3::Zero());

/// Applies a rigid transform to a whole motion (root only), retagging the frame.
MotionSequence transform_motion(const RigidTransform& transform, const MotionSequence& motion,
                                const Vec3& root_rest = Vec3::Zero());

struct RansacConfig {
  int iterations = 500;
  double inlier_threshold = 0.02;
  std::uint64_t seed = 0;
};

struct PlaneFit {
  Vec3 normal = Vec3::UnitZ();  // unit
  double offset = 0.0;          // normal . x = offset
  std::vector<int> inliers;     // ascending
};

/// RANSAC plane fit (3-point samples) followed by a least-squares refit on the
/// inliers. Throws DegenerateInput when fewer than 3 points or no plane is found.
PlaneFit fit_plane_ransac(const Points& points, const RansacConfig& config = {});

}  // namespace scenefit::calib
