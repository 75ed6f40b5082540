#include "scenefit/core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace scenefit {

ParseError::ParseError(const std::string& message, std::size_t offset, std::string field)
    : Error([&] {
        std::ostringstream os;
        os << message;
        if (!field.empty()) os << " (field '" << field << "')";
        if (offset != kUnknownOffset) os << " at byte " << offset;
        return os.str();
      }()),
      offset_(offset),
      field_(std::move(field)) {}

std::string_view to_string(Frame frame) {
  switch (frame) {
    case Frame::kImu:
      return "IMU";
    case Frame::kLidar:
      return "LIDAR";
    case Frame::kCamera:
      return "CAMERA";
    case Frame::kWorld:
      return "WORLD";
  }
  return "UNKNOWN";
}

Frame frame_from_string(std::string_view name) {
  if (name == "IMU") return Frame::kImu;
  if (name == "LIDAR") return Frame::kLidar;
  if (name == "CAMERA") return Frame::kCamera;
  if (name == "WORLD") return Frame::kWorld;
  throw ValidationError("unknown coordinate frame '" + std::string(name) + "'");
}

void require_same_frame(Frame a, Frame b, std::string_view what) {
  if (a != b) {
    throw FrameMismatch(std::string(what) + ": frame " + std::string(to_string(a)) +
                        " does not match " + std::string(to_string(b)));
  }
}

Mat3 rotation_from_axis_angle(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-12) {
    // First-order expansion keeps the map smooth through zero.
    Mat3 skew;
    skew << 0, -axis_angle.z(), axis_angle.y(), axis_angle.z(), 0, -axis_angle.x(),
        -axis_angle.y(), axis_angle.x(), 0;
    return Mat3::Identity() + skew;
  }
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 axis_angle_from_rotation(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.axis() * aa.angle();
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

double orthonormality_error(const Mat3& rotation) {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

// ---------------------------------------------------------------------------

RigidTransform::RigidTransform(Frame source, Frame target)
    : matrix_(Mat4::Identity()), source_(source), target_(target) {}

RigidTransform::RigidTransform(const Mat4& matrix, Frame source, Frame target)
    : matrix_(matrix), source_(source), target_(target) {}

RigidTransform RigidTransform::from_matrix(const Mat4& matrix, Frame source, Frame target) {
  if (!matrix.allFinite()) throw ValidationError("transform contains non-finite entries");
  if ((matrix.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("transform bottom row must be (0, 0, 0, 1)");
  }
  const Mat3 rotation = matrix.topLeftCorner<3, 3>();
  const double err = orthonormality_error(rotation);
  if (err > kOrthonormalTolerance) {
    std::ostringstream os;
    os << "rotation block is not orthonormal with det +1 (deviation " << err << ")";
    throw ValidationError(os.str());
  }
  Mat4 clean = matrix;
  clean.row(3) << 0, 0, 0, 1;
  return RigidTransform(clean, source, target);
}

RigidTransform RigidTransform::from_parts(const Mat3& rotation, const Vec3& translation,
                                          Frame source, Frame target) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return from_matrix(m, source, target);
}

Points RigidTransform::apply(const Points& points) const {
  const Mat3 r = rotation();
  const Vec3 t = translation();
  Points out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(r * p + t);
  return out;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation().transpose();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * translation();
  return RigidTransform(m, target_, source_);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  if (a.source() != b.target()) {
    throw FrameMismatch("compose: outer transform expects " + std::string(to_string(a.source())) +
                        " but inner transform produces " + std::string(to_string(b.target())));
  }
  Mat4 m = a.matrix() * b.matrix();
  Mat3 r = m.topLeftCorner<3, 3>();
  if (orthonormality_error(r) > RigidTransform::kOrthonormalTolerance) {
    m.topLeftCorner<3, 3>() = nearest_rotation(r);
  }
  return RigidTransform::from_matrix(m, b.source(), a.target());
}

// ---------------------------------------------------------------------------

bool all_finite(const Points& points) {
  for (const Vec3& p : points) {
    if (!p.allFinite()) return false;
  }
  return true;
}

void MotionSequence::validate() const {
  if (translation.empty()) throw ValidationError("motion must contain at least one frame");
  if (pose.size() != translation.size()) {
    throw ValidationError("motion has " + std::to_string(translation.size()) +
                          " translations but " + std::to_string(pose.size()) + " poses");
  }
  if (!all_finite(translation)) throw ValidationError("motion translation is not finite");
  for (std::size_t k = 0; k < pose.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!pose[k][j].allFinite()) {
        throw ValidationError("motion pose not finite at frame " + std::to_string(k) + " joint " +
                              std::to_string(j));
      }
    }
  }
  if (!beta.allFinite()) throw ValidationError("motion shape is not finite");
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) {
    throw ValidationError("motion frame rate must be positive");
  }
}

std::string_view to_string(CloudLabel label) {
  switch (label) {
    case CloudLabel::kHuman:
      return "HUMAN";
    case CloudLabel::kScene:
      return "SCENE";
    case CloudLabel::kRaw:
      return "RAW";
  }
  return "UNKNOWN";
}

CloudLabel cloud_label_from_string(std::string_view name) {
  if (name == "HUMAN") return CloudLabel::kHuman;
  if (name == "SCENE") return CloudLabel::kScene;
  if (name == "RAW") return CloudLabel::kRaw;
  throw ValidationError("unknown cloud label '" + std::string(name) + "'");
}

void PointCloudFrame::validate() const {
  if (!all_finite(points)) throw ValidationError("point cloud contains non-finite coordinates");
  if (!std::isfinite(timestamp)) throw ValidationError("point cloud timestamp is not finite");
}

PointCloudFrame apply_transform(const RigidTransform& transform, const PointCloudFrame& cloud) {
  require_same_frame(cloud.frame, transform.source(), "apply_transform");
  PointCloudFrame out;
  out.points = transform.apply(cloud.points);
  out.timestamp = cloud.timestamp;
  out.frame = transform.target();
  out.label = cloud.label;
  return out;
}

void SceneMesh::validate() const {
  if (normals.size() != vertices.size()) {
    throw ValidationError("mesh has " + std::to_string(vertices.size()) + " vertices but " +
                          std::to_string(normals.size()) + " normals");
  }
  if (!all_finite(vertices)) throw ValidationError("mesh vertices are not finite");
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (std::abs(normals[i].norm() - 1.0) > 1e-6) {
      throw ValidationError("mesh normal " + std::to_string(i) + " is not unit length");
    }
  }
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("mesh face " + std::to_string(f) + " has out-of-range vertex index " +
                              std::to_string(idx));
      }
    }
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    if ((b - a).cross(c - a).norm() <= 1e-14) {
      throw ValidationError("mesh face " + std::to_string(f) + " has zero area");
    }
  }
}

void append_mesh(SceneMesh& mesh, const SceneMesh& other) {
  const int offset = static_cast<int>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), other.vertices.begin(), other.vertices.end());
  mesh.normals.insert(mesh.normals.end(), other.normals.begin(), other.normals.end());
  for (const Face& f : other.faces) mesh.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
}

}  // namespace scenefit
