#include "scenefit/body.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace scenefit::body {

namespace {

constexpr std::array<std::string_view, kNumGroups> kGroupNames = {
    "LEFT_FOOT", "RIGHT_FOOT", "LEFT_HAND", "RIGHT_HAND", "TORSO", "LIMBS", "STABLE_JOINTS"};

// Joints allowed in STABLE_JOINTS: torso and neck.
constexpr std::array<int, 7> kTorsoNeckJoints = {0, 3, 6, 9, 12, 13, 14};

}  // namespace

std::string_view to_string(Group group) { return kGroupNames[static_cast<int>(group)]; }

Group group_from_string(std::string_view name) {
  for (int i = 0; i < kNumGroups; ++i) {
    if (kGroupNames[i] == name) return static_cast<Group>(i);
  }
  throw ValidationError("unknown body group '" + std::string(name) + "'");
}

void BodyTemplate::validate() const {
  const auto nv = static_cast<Eigen::Index>(rest_vertices.size());
  if (nv == 0) throw ValidationError("template has no vertices");
  if (!all_finite(rest_vertices)) throw ValidationError("template rest vertices not finite");
  if (parents[0] != -1) throw ValidationError("joint 0 must not have a parent");
  for (int j = 1; j < kNumJoints; ++j) {
    if (parents[j] < 0 || parents[j] >= j) {
      throw ValidationError("joint " + std::to_string(j) + " has invalid parent " +
                            std::to_string(parents[j]));
    }
  }
  if (skin_weights.rows() != nv || skin_weights.cols() != kNumJoints) {
    throw ValidationError("skin_weights must be V x 24");
  }
  if (shape_basis.rows() != 3 * nv || shape_basis.cols() != kNumBetas) {
    throw ValidationError("shape_basis must be 3V x 10");
  }
  if (joint_regressor.rows() != kNumJoints || joint_regressor.cols() != nv) {
    throw ValidationError("joint_regressor must be 24 x V");
  }
  if (!skin_weights.allFinite() || !shape_basis.allFinite() || !joint_regressor.allFinite()) {
    throw ValidationError("template matrices contain non-finite entries");
  }
  if (skin_weights.minCoeff() < 0.0) throw ValidationError("skin weights must be nonnegative");
  for (Eigen::Index i = 0; i < nv; ++i) {
    if (std::abs(skin_weights.row(i).sum() - 1.0) > 1e-6) {
      throw ValidationError("skin weights of vertex " + std::to_string(i) + " do not sum to 1");
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    if (std::abs(joint_regressor.row(j).sum() - 1.0) > 1e-6) {
      throw ValidationError("joint regressor row " + std::to_string(j) + " does not sum to 1");
    }
  }
  for (const Face& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= nv) throw ValidationError("template face index out of range");
    }
  }
  for (int g = 0; g < kNumGroups; ++g) {
    const int limit = g == static_cast<int>(Group::kStableJoints) ? kNumJoints : static_cast<int>(nv);
    for (int idx : groups[g]) {
      if (idx < 0 || idx >= limit) {
        throw ValidationError("group " + std::string(kGroupNames[g]) + " index out of range");
      }
    }
  }
  std::set<int> feet(group(Group::kLeftFoot).begin(), group(Group::kLeftFoot).end());
  feet.insert(group(Group::kRightFoot).begin(), group(Group::kRightFoot).end());
  for (Group hand : {Group::kLeftHand, Group::kRightHand}) {
    for (int idx : group(hand)) {
      if (feet.count(idx)) throw ValidationError("foot and hand groups overlap");
    }
  }
  for (int j : group(Group::kStableJoints)) {
    if (std::find(kTorsoNeckJoints.begin(), kTorsoNeckJoints.end(), j) == kTorsoNeckJoints.end()) {
      throw ValidationError("STABLE_JOINTS may only contain torso and neck joints");
    }
  }
  for (int c = 0; c < 4; ++c) {
    if (contact_grids[c] && static_cast<std::size_t>(contact_grids[c]->cols * contact_grids[c]->rows) !=
                                groups[c].size()) {
      throw ValidationError("contact grid shape does not match group " +
                            std::string(kGroupNames[c]));
    }
  }
}

// ---------------------------------------------------------------------------

BodyModel::BodyModel(const BodyTemplate& tmpl, const Shape& beta) : template_(&tmpl) {
  const std::size_t nv = tmpl.num_vertices();
  shaped_.resize(nv);
  const Eigen::VectorXd offsets = tmpl.shape_basis * beta;
  for (std::size_t i = 0; i < nv; ++i) {
    shaped_[i] = tmpl.rest_vertices[i] + offsets.segment<3>(3 * static_cast<Eigen::Index>(i));
  }
  for (int j = 0; j < kNumJoints; ++j) {
    Vec3 acc = Vec3::Zero();
    for (std::size_t i = 0; i < nv; ++i) {
      const double w = tmpl.joint_regressor(j, static_cast<Eigen::Index>(i));
      if (w != 0.0) acc += w * shaped_[i];
    }
    rest_joints_[j] = acc;
  }
  sparse_weights_.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      const double w = tmpl.skin_weights(static_cast<Eigen::Index>(i), j);
      if (w != 0.0) sparse_weights_[i].emplace_back(j, w);
    }
  }
}

void BodyModel::forward_kinematics(const Vec3& translation, const Pose& pose,
                                   std::array<Mat3, kNumJoints>& rotations,
                                   std::array<Vec3, kNumJoints>& positions) const {
  const auto& parents = template_->parents;
  rotations[0] = rotation_from_axis_angle(pose[0]);
  positions[0] = rest_joints_[0] + translation;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = parents[j];
    rotations[j] = rotations[p] * rotation_from_axis_angle(pose[j]);
    positions[j] = rotations[p] * (rest_joints_[j] - rest_joints_[p]) + positions[p];
  }
}

void BodyModel::pose_into(const Vec3& translation, const Pose& pose, PosedBody& out) const {
  std::array<Mat3, kNumJoints> rotations;
  forward_kinematics(translation, pose, rotations, out.joints);
  std::array<Vec3, kNumJoints> offsets;
  for (int j = 0; j < kNumJoints; ++j) offsets[j] = out.joints[j] - rotations[j] * rest_joints_[j];

  const std::size_t nv = shaped_.size();
  out.vertices.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& weights = sparse_weights_[i];
    if (weights.size() == 1) {
      const int j = weights[0].first;
      out.vertices[i] = rotations[j] * shaped_[i] + offsets[j];
      continue;
    }
    Vec3 acc = Vec3::Zero();
    for (const auto& [j, w] : weights) acc += w * (rotations[j] * shaped_[i] + offsets[j]);
    out.vertices[i] = acc;
  }
}

PosedBody BodyModel::pose(const Vec3& translation, const Pose& pose) const {
  PosedBody out;
  pose_into(translation, pose, out);
  return out;
}

PosedBody skin(const BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k) {
  if (k >= motion.size()) {
    throw std::out_of_range("skin: frame " + std::to_string(k) + " outside motion of length " +
                            std::to_string(motion.size()));
  }
  tmpl.validate();
  const BodyModel model(tmpl, motion.beta);
  PosedBody out = model.pose(motion.translation[k], motion.pose[k]);
  out.frame_index = k;
  return out;
}

std::vector<PosedBody> skin_all(const BodyTemplate& tmpl, const MotionSequence& motion) {
  tmpl.validate();
  const BodyModel model(tmpl, motion.beta);
  std::vector<PosedBody> out(motion.size());
  for (std::size_t k = 0; k < motion.size(); ++k) {
    model.pose_into(motion.translation[k], motion.pose[k], out[k]);
    out[k].frame_index = k;
  }
  return out;
}

double movement(const PosedBody& previous, const PosedBody& current, const std::vector<int>& group) {
  if (group.empty()) return 0.0;
  double sum = 0.0;
  for (int i : group) sum += (current.vertices[i] - previous.vertices[i]).norm();
  return sum / static_cast<double>(group.size());
}

double movement(const BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k, Group group) {
  if (k == 0) throw std::invalid_argument("movement is undefined for frame 0");
  if (k >= motion.size()) throw std::out_of_range("movement: frame out of range");
  const BodyModel model(tmpl, motion.beta);
  const PosedBody prev = model.pose(motion.translation[k - 1], motion.pose[k - 1]);
  const PosedBody cur = model.pose(motion.translation[k], motion.pose[k]);
  return movement(prev, cur, tmpl.group(group));
}

Vec3 centroid(const Points& vertices, const std::vector<int>& group) {
  Vec3 acc = Vec3::Zero();
  if (group.empty()) return acc;
  for (int i : group) acc += vertices[i];
  return acc / static_cast<double>(group.size());
}

std::pair<Vec3, Vec3> transform_root(const Mat3& g_rotation, const Vec3& g_translation,
                                     const Vec3& translation, const Vec3& root_axis_angle,
                                     const Vec3& root_rest_position) {
  const Mat3 root = g_rotation * rotation_from_axis_angle(root_axis_angle);
  const Vec3 t = g_rotation * (root_rest_position + translation) + g_translation - root_rest_position;
  return {t, axis_angle_from_rotation(root)};
}

// ---------------------------------------------------------------------------
// Synthetic template

namespace {

struct RingSpec {
  Vec3 center;
  Vec3 axis_u;
  Vec3 axis_v;
  double radius_u;
  double radius_v;
  int count;
};

class TemplateBuilder {
 public:
  int add_vertex(const Vec3& p, std::vector<std::pair<int, double>> weights, bool torso,
                 int ring_id) {
    vertices_.push_back(p);
    weights_.push_back(std::move(weights));
    torso_.push_back(torso);
    ring_of_.push_back(ring_id);
    return static_cast<int>(vertices_.size()) - 1;
  }

  std::vector<int> add_ring(const RingSpec& spec, std::vector<std::pair<int, double>> weights,
                            bool torso) {
    const int ring_id = next_ring_++;
    std::vector<int> ids;
    for (int k = 0; k < spec.count; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / spec.count;
      const Vec3 p = spec.center + spec.radius_u * std::cos(phi) * spec.axis_u +
                     spec.radius_v * std::sin(phi) * spec.axis_v;
      ids.push_back(add_vertex(p, weights, torso, ring_id));
    }
    ring_centers_.push_back(spec.center);
    return ids;
  }

  void connect_rings(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return;
    const int n = static_cast<int>(a.size());
    for (int k = 0; k < n; ++k) {
      const int k1 = (k + 1) % n;
      faces_.push_back({a[k], a[k1], b[k1]});
      faces_.push_back({a[k], b[k1], b[k]});
    }
  }

  void cap(const std::vector<int>& ring, int apex) {
    const int n = static_cast<int>(ring.size());
    for (int k = 0; k < n; ++k) faces_.push_back({ring[k], ring[(k + 1) % n], apex});
  }

  std::vector<int> add_grid(const Vec3& origin, const Vec3& col_step, const Vec3& row_step, int cols,
                            int rows, int joint) {
    std::vector<int> ids;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        ids.push_back(add_vertex(origin + c * col_step + r * row_step, {{joint, 1.0}}, false, -1));
      }
    }
    for (int r = 0; r + 1 < rows; ++r) {
      for (int c = 0; c + 1 < cols; ++c) {
        const int a = ids[r * cols + c], b = ids[r * cols + c + 1];
        const int d = ids[(r + 1) * cols + c], e = ids[(r + 1) * cols + c + 1];
        faces_.push_back({a, b, e});
        faces_.push_back({a, e, d});
      }
    }
    return ids;
  }

  Points vertices_;
  std::vector<std::vector<std::pair<int, double>>> weights_;
  std::vector<bool> torso_;
  std::vector<int> ring_of_;
  Points ring_centers_;
  std::vector<Face> faces_;
  int next_ring_ = 0;
};

// Rest joint layout (beta = 0). x right, y forward, z up; pelvis at the origin.
const std::array<Vec3, kNumJoints>& rest_joint_layout() {
  static const std::array<Vec3, kNumJoints> layout = {
      Vec3(0, 0, 0),         Vec3(-0.09, 0, -0.06),    Vec3(0.09, 0, -0.06),
      Vec3(0, 0, 0.10),      Vec3(-0.09, 0, -0.48),    Vec3(0.09, 0, -0.48),
      Vec3(0, 0, 0.22),      Vec3(-0.09, 0, -0.88),    Vec3(0.09, 0, -0.88),
      Vec3(0, 0, 0.34),      Vec3(-0.09, 0.025, -0.93), Vec3(0.09, 0.025, -0.93),
      Vec3(0, 0, 0.52),      Vec3(-0.07, 0, 0.46),     Vec3(0.07, 0, 0.46),
      Vec3(0, 0, 0.62),      Vec3(-0.18, 0, 0.46),     Vec3(0.18, 0, 0.46),
      Vec3(-0.45, 0, 0.46),  Vec3(0.45, 0, 0.46),      Vec3(-0.70, 0, 0.46),
      Vec3(0.70, 0, 0.46),   Vec3(-0.79, 0.035, 0.46), Vec3(0.79, 0.035, 0.46)};
  return layout;
}

struct Bone {
  int from;
  int to;  // -1: head top
  int controller;
  bool torso;
  int ring_size;
  double radius_from_u, radius_from_v, radius_to_u, radius_to_v;
};

}  // namespace

BodyTemplate make_synthetic_template(int n_vertices, std::uint64_t seed) {
  if (n_vertices < kMinSyntheticVertices) {
    throw std::invalid_argument("make_synthetic_template needs at least " +
                                std::to_string(kMinSyntheticVertices) +
                                " vertices to populate every group");
  }
  const auto& J = rest_joint_layout();
  const Vec3 ex(1, 0, 0), ey(0, 1, 0), ez(0, 0, 1);
  const Vec3 head_top(0, 0, 0.75);

  TemplateBuilder b;

  // Joint rings: each sits on its joint and regresses it exactly.
  struct JointRing {
    int joint;
    Vec3 u, v;
    double ru, rv;
    int count;
    bool torso;
  };
  const std::vector<JointRing> joint_rings = {
      {0, ex, ey, 0.15, 0.10, 8, true},    {3, ex, ey, 0.14, 0.09, 8, true},
      {6, ex, ey, 0.14, 0.10, 8, true},    {9, ex, ey, 0.16, 0.10, 8, true},
      {12, ex, ey, 0.05, 0.05, 6, true},   {15, ex, ey, 0.085, 0.095, 6, true},
      {13, ey, ez, 0.05, 0.05, 6, true},   {14, ey, ez, 0.05, 0.05, 6, true},
      {1, ex, ey, 0.07, 0.07, 6, false},   {2, ex, ey, 0.07, 0.07, 6, false},
      {4, ex, ey, 0.05, 0.05, 6, false},   {5, ex, ey, 0.05, 0.05, 6, false},
      {7, ex, ey, 0.035, 0.035, 6, false}, {8, ex, ey, 0.035, 0.035, 6, false},
      {16, ey, ez, 0.05, 0.05, 6, false},  {17, ey, ez, 0.05, 0.05, 6, false},
      {18, ey, ez, 0.04, 0.04, 6, false},  {19, ey, ez, 0.04, 0.04, 6, false},
      {20, ey, ez, 0.025, 0.025, 6, false}, {21, ey, ez, 0.025, 0.025, 6, false},
  };
  std::array<std::vector<int>, kNumJoints> ring_at;
  std::array<double, kNumJoints> ru_at{}, rv_at{};
  for (const JointRing& jr : joint_rings) {
    const int parent = kSmplParents[jr.joint];
    std::vector<std::pair<int, double>> w;
    if (parent < 0) {
      w = {{jr.joint, 1.0}};
    } else {
      w = {{parent, 0.5}, {jr.joint, 0.5}};
    }
    ring_at[jr.joint] = b.add_ring({J[jr.joint], jr.u, jr.v, jr.ru, jr.rv, jr.count}, w, jr.torso);
    ru_at[jr.joint] = jr.ru;
    rv_at[jr.joint] = jr.rv;
  }

  // Contact plates: foot soles and palms, rigidly attached to ankle / wrist.
  const std::vector<int> left_sole =
      b.add_grid(Vec3(-0.12, -0.05, -0.93), Vec3(0.03, 0, 0), Vec3(0, 0.05, 0), 3, 4, 7);
  const std::vector<int> right_sole =
      b.add_grid(Vec3(0.06, -0.05, -0.93), Vec3(0.03, 0, 0), Vec3(0, 0.05, 0), 3, 4, 8);
  const std::vector<int> left_palm =
      b.add_grid(Vec3(-0.72, 0.035, 0.43), Vec3(-0.14 / 3.0, 0, 0), Vec3(0, 0, 0.03), 4, 3, 20);
  const std::vector<int> right_palm =
      b.add_grid(Vec3(0.72, 0.035, 0.43), Vec3(0.14 / 3.0, 0, 0), Vec3(0, 0, 0.03), 4, 3, 21);

  const int top = b.add_vertex(head_top, {{15, 1.0}}, true, -1);

  // Intermediate rings fill the remaining budget along the bones.
  const std::vector<Bone> bones = {
      {0, 3, 0, true, 8, 0.15, 0.10, 0.14, 0.09},       {3, 6, 3, true, 8, 0.14, 0.09, 0.14, 0.10},
      {6, 9, 6, true, 8, 0.14, 0.10, 0.16, 0.10},       {15, -1, 15, true, 6, 0.085, 0.095, 0.03, 0.03},
      {1, 4, 1, false, 6, 0.07, 0.07, 0.05, 0.05},      {2, 5, 2, false, 6, 0.07, 0.07, 0.05, 0.05},
      {4, 7, 4, false, 6, 0.05, 0.05, 0.035, 0.035},    {5, 8, 5, false, 6, 0.05, 0.05, 0.035, 0.035},
      {16, 18, 16, false, 6, 0.05, 0.05, 0.04, 0.04},   {17, 19, 17, false, 6, 0.05, 0.05, 0.04, 0.04},
      {18, 20, 18, false, 6, 0.04, 0.04, 0.025, 0.025}, {19, 21, 19, false, 6, 0.04, 0.04, 0.025, 0.025},
  };
  auto bone_end = [&](const Bone& bone) { return bone.to < 0 ? head_top : J[bone.to]; };
  std::vector<int> rings_per_bone(bones.size(), 0);
  int remaining = n_vertices - static_cast<int>(b.vertices_.size());
  while (true) {
    int best = -1;
    double best_score = 0.0;
    for (std::size_t i = 0; i < bones.size(); ++i) {
      if (bones[i].ring_size > remaining) continue;
      const double length = (bone_end(bones[i]) - J[bones[i].from]).norm();
      const double score = length / (rings_per_bone[i] + 1);
      if (best < 0 || score > best_score + 1e-12) {
        best = static_cast<int>(i);
        best_score = score;
      }
    }
    if (best < 0) break;
    ++rings_per_bone[best];
    remaining -= bones[best].ring_size;
  }

  for (std::size_t i = 0; i < bones.size(); ++i) {
    const Bone& bone = bones[i];
    const Vec3 start = J[bone.from];
    const Vec3 end = bone_end(bone);
    const bool along_x = std::abs((end - start).normalized().x()) > 0.5;
    const Vec3 u = along_x ? ey : ex;
    const Vec3 v = along_x ? ez : ey;
    std::vector<int> previous = ring_at[bone.from];
    const int count = rings_per_bone[i];
    for (int m = 1; m <= count; ++m) {
      const double s = static_cast<double>(m) / (count + 1);
      const RingSpec spec{start + s * (end - start), u, v,
                          (1 - s) * bone.radius_from_u + s * bone.radius_to_u,
                          (1 - s) * bone.radius_from_v + s * bone.radius_to_v, bone.ring_size};
      std::vector<int> ring = b.add_ring(spec, {{bone.controller, 1.0}}, bone.torso);
      b.connect_rings(previous, ring);
      previous = std::move(ring);
    }
    if (bone.to >= 0) {
      b.connect_rings(previous, ring_at[bone.to]);
    } else {
      b.cap(previous, top);
    }
  }
  b.connect_rings(ring_at[13], ring_at[16]);
  b.connect_rings(ring_at[14], ring_at[17]);
  b.connect_rings(ring_at[12], ring_at[15]);

  // Leftover (< one ring) becomes scattered points on the crown of the head.
  for (int k = 0; remaining > 0; ++k, --remaining) {
    const double phi = 2.0 * std::numbers::pi * k / 5.0 + 0.3;
    b.add_vertex(Vec3(0.04 * std::cos(phi), 0.045 * std::sin(phi), 0.735), {{15, 1.0}}, true, -1);
  }

  const int nv = static_cast<int>(b.vertices_.size());
  BodyTemplate t;
  t.rest_vertices = b.vertices_;
  t.faces = b.faces_;
  t.skin_weights = Eigen::MatrixXd::Zero(nv, kNumJoints);
  for (int i = 0; i < nv; ++i) {
    for (const auto& [j, w] : b.weights_[i]) t.skin_weights(i, j) += w;
  }

  t.joint_regressor = Eigen::MatrixXd::Zero(kNumJoints, nv);
  for (int j = 0; j < kNumJoints; ++j) {
    const std::vector<int>* src = &ring_at[j];
    if (j == 10) src = &left_sole;
    if (j == 11) src = &right_sole;
    if (j == 22) src = &left_palm;
    if (j == 23) src = &right_palm;
    for (int idx : *src) t.joint_regressor(j, idx) = 1.0 / static_cast<double>(src->size());
  }

  // Shape basis. 0: global scale, 1: leg length, 2: arm length, 3: girth,
  // 4..9: seeded zero-mean radial detail per ring.
  t.shape_basis = Eigen::MatrixXd::Zero(3 * nv, kNumBetas);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> ring_size(b.next_ring_, 0);
  for (int i = 0; i < nv; ++i) {
    if (b.ring_of_[i] >= 0) ++ring_size[b.ring_of_[i]];
  }
  std::vector<std::array<double, 6>> detail(nv);
  for (int i = 0; i < nv; ++i) {
    for (double& d : detail[i]) d = normal(rng);
  }
  for (int r = 0; r < b.next_ring_; ++r) {
    std::array<double, 6> mean{};
    for (int i = 0; i < nv; ++i) {
      if (b.ring_of_[i] != r) continue;
      for (int c = 0; c < 6; ++c) mean[c] += detail[i][c] / ring_size[r];
    }
    for (int i = 0; i < nv; ++i) {
      if (b.ring_of_[i] != r) continue;
      for (int c = 0; c < 6; ++c) detail[i][c] -= mean[c];
    }
  }
  std::set<int> left_leg_joints = {1, 4, 7}, right_leg_joints = {2, 5, 8};
  std::set<int> left_arm_joints = {16, 18, 20}, right_arm_joints = {17, 19, 21};
  auto primary_joint = [&](int i) {
    int best = -1;
    double w = -1.0;
    for (const auto& [j, wj] : b.weights_[i]) {
      if (wj > w + 1e-12 || (std::abs(wj - w) <= 1e-12 && j > best)) {
        best = j;
        w = wj;
      }
    }
    return best;
  };
  for (int i = 0; i < nv; ++i) {
    const Vec3& p = b.vertices_[i];
    auto row = [&](int c) { return t.shape_basis.block<3, 1>(3 * i, c); };
    row(0) = 0.1 * p;
    const int pj = primary_joint(i);
    if (left_leg_joints.count(pj) || right_leg_joints.count(pj)) {
      row(1) = Vec3(0, 0, 0.1 * (p.z() - J[1].z()));
    }
    if (left_arm_joints.count(pj)) row(2) = Vec3(0.1 * (p.x() - J[16].x()), 0, 0);
    if (right_arm_joints.count(pj)) row(2) = Vec3(0.1 * (p.x() - J[17].x()), 0, 0);
    if (b.ring_of_[i] >= 0) {
      const Vec3 radial = p - b.ring_centers_[b.ring_of_[i]];
      row(3) = 0.1 * radial;
      const Vec3 dir = radial.normalized();
      for (int c = 0; c < 6; ++c) row(4 + c) = 0.02 * detail[i][c] * dir;
    }
  }

  auto& g = t.groups;
  g[static_cast<int>(Group::kLeftFoot)] = left_sole;
  g[static_cast<int>(Group::kRightFoot)] = right_sole;
  g[static_cast<int>(Group::kLeftHand)] = left_palm;
  g[static_cast<int>(Group::kRightHand)] = right_palm;
  for (int i = 0; i < nv; ++i) {
    g[static_cast<int>(b.torso_[i] ? Group::kTorso : Group::kLimbs)].push_back(i);
  }
  g[static_cast<int>(Group::kStableJoints)] = {0, 3, 6, 9, 12};
  t.contact_grids[0] = GridShape{3, 4};
  t.contact_grids[1] = GridShape{3, 4};
  t.contact_grids[2] = GridShape{4, 3};
  t.contact_grids[3] = GridShape{4, 3};

  t.validate();
  return t;
}

}  // namespace scenefit::body
