#pragma once

#include "scenefit/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace scenefit::body {

/// Named index sets on the template. STABLE_JOINTS holds joint indices, every
/// other group holds vertex indices.
enum class Group : int {
  kLeftFoot = 0,
  kRightFoot,
  kLeftHand,
  kRightHand,
  kTorso,
  kLimbs,
  kStableJoints,
};
inline constexpr int kNumGroups = 7;

std::string_view to_string(Group group);
Group group_from_string(std::string_view name);

/// SMPL joint topology: parent of each joint, -1 for the pelvis.
inline constexpr std::array<int, kNumJoints> kSmplParents = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

namespace joint {
inline constexpr int kPelvis = 0, kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4,
                     kRightKnee = 5, kSpine2 = 6, kLeftAnkle = 7, kRightAnkle = 8, kSpine3 = 9,
                     kLeftFoot = 10, kRightFoot = 11, kNeck = 12, kLeftCollar = 13,
                     kRightCollar = 14, kHead = 15, kLeftShoulder = 16, kRightShoulder = 17,
                     kLeftElbow = 18, kRightElbow = 19, kLeftWrist = 20, kRightWrist = 21,
                     kLeftHand = 22, kRightHand = 23;
}  // namespace joint

/// Row-major grid layout of a planar contact group (cols varies fastest).
struct GridShape {
  int cols = 0;
  int rows = 0;
};

struct BodyTemplate {
  Points rest_vertices;
  std::vector<Face> faces;
  std::array<int, kNumJoints> parents = kSmplParents;
  Eigen::MatrixXd skin_weights;     // V x 24, rows sum to 1
  Eigen::MatrixXd shape_basis;      // 3V x 10, vertex i occupies rows 3i..3i+2
  Eigen::MatrixXd joint_regressor;  // 24 x V, rows sum to 1
  std::array<std::vector<int>, kNumGroups> groups;
  /// Optional grid layout for the four contact groups (feet, hands), used by the
  /// synthetic scene generator to stamp hold imprints.
  std::array<std::optional<GridShape>, 4> contact_grids;

  std::size_t num_vertices() const { return rest_vertices.size(); }
  const std::vector<int>& group(Group g) const { return groups[static_cast<int>(g)]; }

  /// Throws ValidationError describing the first violated invariant.
  void validate() const;
};

/// V_k and J_k for one frame of a motion.
struct PosedBody {
  Points vertices;
  std::array<Vec3, kNumJoints> joints;
  std::size_t frame_index = 0;
};

/// A template specialised to one shape vector. Caches shaped rest geometry,
/// rest joints and a sparse skinning table so that posing is cheap; immutable.
class BodyModel {
 public:
  BodyModel(const BodyTemplate& tmpl, const Shape& beta);

  const BodyTemplate& body_template() const { return *template_; }
  const Points& shaped_vertices() const { return shaped_; }
  const std::array<Vec3, kNumJoints>& rest_joints() const { return rest_joints_; }
  std::size_t num_vertices() const { return shaped_.size(); }

  /// Forward kinematics: world rotation and position of every joint.
  void forward_kinematics(const Vec3& translation, const Pose& pose,
                          std::array<Mat3, kNumJoints>& rotations,
                          std::array<Vec3, kNumJoints>& positions) const;

  /// Linear blend skinning of the shaped rest pose.
  void pose_into(const Vec3& translation, const Pose& pose, PosedBody& out) const;
  PosedBody pose(const Vec3& translation, const Pose& pose) const;

  /// Joints whose rotation moves vertex i (non-zero skin weight), per vertex.
  const std::vector<std::pair<int, double>>& weights_of(std::size_t vertex) const {
    return sparse_weights_[vertex];
  }

 private:
  const BodyTemplate* template_;
  Points shaped_;
  std::array<Vec3, kNumJoints> rest_joints_;
  std::vector<std::vector<std::pair<int, double>>> sparse_weights_;
};

/// Phi(M_k): pose frame k of `motion`. Throws std::out_of_range for bad k.
PosedBody skin(const BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k);

/// Every frame of `motion`, posed with one shared BodyModel.
std::vector<PosedBody> skin_all(const BodyTemplate& tmpl, const MotionSequence& motion);

/// Mean displacement of the group's vertices between frames k-1 and k (meters).
double movement(const BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k, Group group);
double movement(const PosedBody& previous, const PosedBody& current, const std::vector<int>& group);

/// Vertex centroid of a group.
Vec3 centroid(const Points& vertices, const std::vector<int>& group);

/// Root parameters after applying `g` to the posed body: the result satisfies
/// skin(new)(x) = g(skin(old)(x)) given the rest position of the root joint.
std::pair<Vec3, Vec3> transform_root(const Mat3& g_rotation, const Vec3& g_translation,
                                     const Vec3& translation, const Vec3& root_axis_angle,
                                     const Vec3& root_rest_position);

/// Deterministic capsule-limbed stand-in for a licensed body model with the
/// same 24-joint contract. Requires n_vertices >= 200; produces exactly that many.
BodyTemplate make_synthetic_template(int n_vertices, std::uint64_t seed);

inline constexpr int kMinSyntheticVertices = 200;

}  // namespace scenefit::body
