#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scenefit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Points = std::vector<Vec3>;

inline constexpr int kNumJoints = 24;
inline constexpr int kNumBetas = 10;

/// Per-joint axis-angle rotations, radians. Index 0 is the global (root) orientation.
using Pose = std::array<Vec3, kNumJoints>;
using Shape = Eigen::Matrix<double, kNumBetas, 1>;
using Face = std::array<int, 3>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two spatial quantities tagged with different coordinate frames were combined.
class FrameMismatch : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant (bad indices, non-unit normals, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Geometric input is too degenerate for the requested operation.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized input. `offset` is the byte offset into the input when
/// known, `field` the dotted/indexed path of the offending field when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset, std::string field);

  std::size_t offset() const { return offset_; }
  const std::string& field() const { return field_; }

  static constexpr std::size_t kUnknownOffset = static_cast<std::size_t>(-1);

 private:
  std::size_t offset_;
  std::string field_;
};

// ---------------------------------------------------------------------------
// Coordinate frames

enum class Frame { kImu, kLidar, kCamera, kWorld };

std::string_view to_string(Frame frame);
Frame frame_from_string(std::string_view name);

/// Throws FrameMismatch with `what` in the message unless `a == b`.
void require_same_frame(Frame a, Frame b, std::string_view what);

// ---------------------------------------------------------------------------
// Rotations

/// Rodrigues formula: axis-angle vector (radians) to rotation matrix.
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);

/// Inverse of rotation_from_axis_angle; angle in [0, pi].
Vec3 axis_angle_from_rotation(const Mat3& rotation);

/// Closest rotation in the Frobenius sense (polar decomposition via SVD), det +1.
Mat3 nearest_rotation(const Mat3& m);

/// max |R^T R - I| entry and |det R - 1|, whichever is larger.
double orthonormality_error(const Mat3& rotation);

// ---------------------------------------------------------------------------
// RigidTransform

/// Rigid motion mapping points expressed in `source()` into `target()`.
/// Stored as a homogeneous 4x4 matrix; the rotation block is kept orthonormal.
class RigidTransform {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  /// Identity between two frames.
  RigidTransform(Frame source, Frame target);

  /// Validates the rotation block (orthonormal, det +1, within 1e-9).
  static RigidTransform from_matrix(const Mat4& matrix, Frame source, Frame target);
  static RigidTransform from_parts(const Mat3& rotation, const Vec3& translation, Frame source,
                                   Frame target);

  const Mat4& matrix() const { return matrix_; }
  Mat3 rotation() const { return matrix_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return matrix_.topRightCorner<3, 1>(); }
  Frame source() const { return source_; }
  Frame target() const { return target_; }

  Vec3 apply(const Vec3& point) const { return rotation() * point + translation(); }
  Points apply(const Points& points) const;
  RigidTransform inverse() const;

 private:
  RigidTransform(const Mat4& matrix, Frame source, Frame target);

  Mat4 matrix_;
  Frame source_;
  Frame target_;
};

/// (a o b)(x) = a(b(x)). Requires a.source() == b.target().
/// Re-orthonormalizes the product's rotation block when it drifts beyond 1e-9.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

// ---------------------------------------------------------------------------
// Motion, clouds and meshes

/// M = (T, theta, beta): per-frame root translation (m) and joint rotations (rad),
/// plus a shape vector shared by all frames.
struct MotionSequence {
  Points translation;
  std::vector<Pose> pose;
  Shape beta = Shape::Zero();
  double frame_rate = 30.0;
  Frame frame = Frame::kWorld;

  std::size_t size() const { return translation.size(); }

  /// N >= 1, T and theta agree in length, everything finite, frame rate positive.
  void validate() const;
};

enum class CloudLabel { kHuman, kScene, kRaw };

std::string_view to_string(CloudLabel label);
CloudLabel cloud_label_from_string(std::string_view name);

struct PointCloudFrame {
  Points points;
  double timestamp = 0.0;
  Frame frame = Frame::kWorld;
  CloudLabel label = CloudLabel::kRaw;

  void validate() const;
};

/// Applies `transform` pointwise; the cloud must be expressed in transform.source().
PointCloudFrame apply_transform(const RigidTransform& transform, const PointCloudFrame& cloud);

/// Triangle mesh with per-vertex unit normals.
struct SceneMesh {
  Points vertices;
  std::vector<Face> faces;
  Points normals;

  /// Face indices in range, normals unit within 1e-6, no zero-area faces.
  void validate() const;
};

/// Appends `other` to `mesh`, offsetting face indices.
void append_mesh(SceneMesh& mesh, const SceneMesh& other);

bool all_finite(const Points& points);

}  // namespace scenefit
