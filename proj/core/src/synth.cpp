#include "scenefit/synth.hpp"

#include "scenefit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace scenefit::synth {

namespace {

constexpr double kPi = std::numbers::pi;

struct LimbInfo {
  int root;    // shoulder or hip
  int middle;  // elbow or knee
  int end;     // wrist or ankle
  bool foot;
  Vec3 pole;   // bend direction hint, wall frame
};

// Indexed like HoldPlan.
const std::array<LimbInfo, 4>& limbs() {
  namespace j = body::joint;
  static const std::array<LimbInfo, 4> info = {
      LimbInfo{j::kLeftHip, j::kLeftKnee, j::kLeftAnkle, true, Vec3(-1, 0, 0)},
      LimbInfo{j::kRightHip, j::kRightKnee, j::kRightAnkle, true, Vec3(1, 0, 0)},
      LimbInfo{j::kLeftShoulder, j::kLeftElbow, j::kLeftWrist, false, Vec3(-1, -1, -1).normalized()},
      LimbInfo{j::kRightShoulder, j::kRightElbow, j::kRightWrist, false, Vec3(1, -1, -1).normalized()},
  };
  return info;
}

// World rotation of the end joint while on a hold (wall frame): hands point
// their fingers up with the palm on the wall, feet stay level.
Mat3 end_rotation(int limb) {
  if (limb == 2) return rotation_from_axis_angle(Vec3(0, kPi / 2, 0));
  if (limb == 3) return rotation_from_axis_angle(Vec3(0, -kPi / 2, 0));
  return Mat3::Identity();
}

Vec3 hold_normal(int limb) { return limbs()[limb].foot ? Vec3(0, 0, 1) : Vec3(0, -1, 0); }

Vec3 progress_direction(WallType wall) { return wall == WallType::kHorizontal ? Vec3(1, 0, 0) : Vec3(0, 0, 1); }

double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

// Position of a limb's end joint at sequence fraction t (wall frame).
Vec3 limb_target(const LimbPath& path, int limb, double t) {
  const double s = std::clamp((t - kMoveStart[limb]) / kMoveDuration, 0.0, 1.0);
  const Vec3 retreat = -kLift * std::sin(kPi * s) * Vec3::UnitY();
  if (!limbs()[limb].foot) return path.start + smoothstep(s) * (path.end - path.start) + retreat;
  // Feet climb above both ledges first, then move across and settle down, so a
  // sole never passes below the top of a ledge it is close to.
  const double top = std::max(path.start.z(), path.end.z()) + kFootClearance;
  Vec3 p = path.start;
  if (s <= 0.5) {
    p.z() = path.start.z() + smoothstep(2.0 * s) * (top - path.start.z());
  } else {
    const double u = smoothstep(2.0 * s - 1.0);
    p.x() += u * (path.end.x() - path.start.x());
    p.y() += u * (path.end.y() - path.start.y());
    p.z() = top + u * (path.end.z() - top);
  }
  return p + retreat;
}

// Grid mesh over `rows x cols` points, triangulated so faces wind around `normal`.
SceneMesh grid_mesh(const std::vector<Vec3>& pts, int cols, int rows, const Vec3& normal) {
  SceneMesh m;
  m.vertices = pts;
  m.normals.assign(pts.size(), normal);
  auto id = [&](int c, int r) { return r * cols + c; };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      Face a{id(c, r), id(c + 1, r), id(c + 1, r + 1)};
      Face b{id(c, r), id(c + 1, r + 1), id(c, r + 1)};
      const Vec3 n = (pts[a[1]] - pts[a[0]]).cross(pts[a[2]] - pts[a[0]]);
      if (n.dot(normal) < 0) {
        std::swap(a[1], a[2]);
        std::swap(b[1], b[2]);
      }
      m.faces.push_back(a);
      m.faces.push_back(b);
    }
  }
  return m;
}

SceneMesh plane_grid(const Vec3& origin, const Vec3& du, const Vec3& dv, int cols, int rows, const Vec3& normal) {
  std::vector<Vec3> pts;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.push_back(origin + c * du + r * dv);
  }
  return grid_mesh(pts, cols, rows, normal);
}

// Plate vertices of `limb` with its end joint at `target` (wall frame), plus
// one extrapolated ring of grid points.
SceneMesh hold_imprint(const body::BodyModel& model, int limb, const Vec3& target) {
  const body::BodyTemplate& tmpl = model.body_template();
  const auto& grid = tmpl.contact_grids[limb];
  if (!grid) throw ValidationError("body template has no grid layout for contact group " + std::to_string(limb));
  const auto& group = tmpl.groups[limb];
  const int cols = grid->cols, rows = grid->rows;
  if (static_cast<int>(group.size()) != cols * rows || cols < 2 || rows < 2) {
    throw ValidationError("contact grid layout does not match its group");
  }
  const int end = limbs()[limb].end;
  const Mat3 r = end_rotation(limb);
  const Vec3& rest_end = model.rest_joints()[end];
  auto plate = [&](int c, int row) {
    return Vec3(r * (model.shaped_vertices()[group[row * cols + c]] - rest_end) + target);
  };
  const Vec3 origin = plate(0, 0);
  const Vec3 du = plate(1, 0) - origin;
  const Vec3 dv = plate(0, 1) - origin;
  std::vector<Vec3> pts;
  for (int row = -1; row <= rows; ++row) {
    for (int c = -1; c <= cols; ++c) {
      const bool inside = c >= 0 && c < cols && row >= 0 && row < rows;
      pts.push_back(inside ? plate(c, row) : Vec3(origin + c * du + row * dv));
    }
  }
  return grid_mesh(pts, cols + 2, rows + 2, hold_normal(limb));
}

void transform_mesh(SceneMesh& mesh, const RigidTransform& g) {
  const Mat3 r = g.rotation();
  for (Vec3& v : mesh.vertices) v = g.apply(v);
  for (Vec3& n : mesh.normals) n = r * n;
}

// Elbow/knee position for a two-bone chain from `a` to `c`.
Vec3 bend_point(const Vec3& a, const Vec3& c, double l1, double l2, const Vec3& pole) {
  const Vec3 ac = c - a;
  const double d = ac.norm();
  if (d > l1 + l2 || d < std::abs(l1 - l2) || d == 0.0) {
    throw DegenerateInput("synthetic motion: hold out of reach (distance " + std::to_string(d) + " m)");
  }
  const Vec3 u = ac / d;
  Vec3 w = pole - pole.dot(u) * u;
  if (w.norm() < 1e-6) w = u.unitOrthogonal();
  w.normalize();
  const double along = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
  const double off = std::sqrt(std::max(0.0, l1 * l1 - along * along));
  return a + along * u + off * w;
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  return Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
}

// Sets the three joint rotations of `limb` so that its end joint sits at
// `target` with world rotation `end_world`.
void solve_limb(const body::BodyModel& model, int limb, const Vec3& translation, Pose& pose, const Vec3& target,
                const Mat3& end_world) {
  const LimbInfo& info = limbs()[limb];
  const auto& rest = model.rest_joints();
  const auto& parents = model.body_template().parents;
  std::array<Mat3, kNumJoints> rot;
  std::array<Vec3, kNumJoints> pos;
  model.forward_kinematics(translation, pose, rot, pos);
  const Vec3 b1 = rest[info.middle] - rest[info.root];
  const Vec3 b2 = rest[info.end] - rest[info.middle];
  const Vec3 a = pos[info.root];
  const Vec3 e = bend_point(a, target, b1.norm(), b2.norm(), info.pole);
  const Mat3 parent_world = rot[parents[info.root]];
  const Mat3 local_a = rotation_between(b1, parent_world.transpose() * (e - a));
  const Mat3 world_a = parent_world * local_a;
  const Mat3 local_b = rotation_between(b2, world_a.transpose() * (target - e));
  const Mat3 world_b = world_a * local_b;
  pose[info.root] = axis_angle_from_rotation(local_a);
  pose[info.middle] = axis_angle_from_rotation(local_b);
  pose[info.end] = axis_angle_from_rotation(world_b.transpose() * end_world);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t frame, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view to_string(WallType wall) {
  switch (wall) {
    case WallType::kHorizontal:
      return "HORIZONTAL";
    case WallType::kVertical:
      return "VERTICAL";
    case WallType::kOverhang:
      return "OVERHANG";
  }
  return "VERTICAL";
}

WallType wall_type_from_string(std::string_view name) {
  if (name == "HORIZONTAL") return WallType::kHorizontal;
  if (name == "VERTICAL") return WallType::kVertical;
  if (name == "OVERHANG") return WallType::kOverhang;
  throw ValidationError("unknown wall type '" + std::string(name) + "'");
}

void SynthConfig::validate() const {
  if (n_frames < 4) throw ValidationError("synth: n_frames must be >= 4");
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) throw ValidationError("synth: frame_rate must be positive");
  if (!(wall_width >= 2.0) || !(wall_height >= 2.5) || !std::isfinite(wall_width) || !std::isfinite(wall_height)) {
    throw ValidationError("synth: wall must be at least 2 m wide and 2.5 m high");
  }
  if (!(lidar_sigma >= 0.0) || !std::isfinite(lidar_sigma)) throw ValidationError("synth: lidar_sigma must be >= 0");
  if (!(pose_sigma >= 0.0) || !std::isfinite(pose_sigma)) throw ValidationError("synth: pose_sigma must be >= 0");
  if (!drift.allFinite()) throw ValidationError("synth: drift must be finite");
  if (points_per_frame < 0) throw ValidationError("synth: points_per_frame must be >= 0");
  if (template_vertices < body::kMinSyntheticVertices) {
    throw ValidationError("synth: template_vertices must be >= " + std::to_string(body::kMinSyntheticVertices));
  }
  if (!beta.allFinite()) throw ValidationError("synth: beta must be finite");
  if (holds) {
    for (const LimbPath& p : *holds) {
      if (!p.start.allFinite() || !p.end.allFinite()) throw ValidationError("synth: hold positions must be finite");
    }
  }
}

Vec3 root_start() { return Vec3(0.0, 0.12, 1.05); }

HoldPlan default_holds(WallType wall) {
  const double hand_y = kWallOffset - kHoldDepth - 0.035;
  const double foot_y = 0.17;
  if (wall == WallType::kHorizontal) {
    return {LimbPath{Vec3(-0.45, foot_y, 0.50), Vec3(-0.20, foot_y, 0.50)},
            LimbPath{Vec3(0.45, foot_y, 0.50), Vec3(0.70, foot_y, 0.50)},
            LimbPath{Vec3(-0.32, hand_y, 1.65), Vec3(-0.10, hand_y, 1.67)},
            LimbPath{Vec3(0.34, hand_y, 1.70), Vec3(0.56, hand_y, 1.72)}};
  }
  // Feet start wide so that a rising foot stays far from the ledge it is heading for.
  return {LimbPath{Vec3(-0.55, foot_y, 0.52), Vec3(-0.12, foot_y, 0.77)},
          LimbPath{Vec3(0.55, foot_y, 0.52), Vec3(0.12, foot_y, 0.77)},
          LimbPath{Vec3(-0.32, hand_y, 1.65), Vec3(-0.30, hand_y, 1.90)},
          LimbPath{Vec3(0.34, hand_y, 1.70), Vec3(0.32, hand_y, 1.90)}};
}

RigidTransform wall_to_world(WallType wall) {
  // The overhang leans the wall's top towards the climber.
  const double angle = wall == WallType::kOverhang ? kOverhangDegrees * kPi / 180.0 : 0.0;
  return RigidTransform::from_parts(rotation_from_axis_angle(Vec3(angle, 0, 0)), Vec3::Zero(), Frame::kWorld,
                                    Frame::kWorld);
}

Vec3 default_sensor_position(const SynthConfig& config) {
  return wall_to_world(config.wall).apply(Vec3(0.5, -2.5, root_start().z() + 0.3));
}

SceneMesh generate_scene(const SynthConfig& config, const body::BodyTemplate& tmpl) {
  config.validate();
  const int cols = static_cast<int>(std::lround(config.wall_width / kGridSpacing)) + 1;
  const int rows = static_cast<int>(std::lround(config.wall_height / kGridSpacing)) + 1;
  const double half = 0.5 * config.wall_width;
  const Vec3 du(config.wall_width / (cols - 1), 0, 0);

  SceneMesh wall_frame = plane_grid(Vec3(-half, kWallOffset, 0.0), du, Vec3(0, 0, config.wall_height / (rows - 1)),
                                    cols, rows, Vec3(0, -1, 0));
  const body::BodyModel model(tmpl, config.beta);
  const HoldPlan plan = config.holds ? *config.holds : default_holds(config.wall);
  for (int l = 0; l < 4; ++l) {
    append_mesh(wall_frame, hold_imprint(model, l, plan[l].start));
    append_mesh(wall_frame, hold_imprint(model, l, plan[l].end));
  }
  transform_mesh(wall_frame, wall_to_world(config.wall));

  // Ground at z = 0 in front of the wall base.
  const double depth = 2.0;
  const int ground_rows = static_cast<int>(std::lround(depth / kGridSpacing)) + 1;
  SceneMesh scene = plane_grid(Vec3(-half, -depth + 0.4, 0.0), du, Vec3(0, depth / (ground_rows - 1), 0), cols,
                               ground_rows, Vec3(0, 0, 1));
  append_mesh(scene, wall_frame);
  scene.validate();
  return scene;
}

MotionSequence generate_motion(const SynthConfig& config, const body::BodyTemplate& tmpl, const SceneMesh& scene) {
  config.validate();
  const body::BodyModel model(tmpl, config.beta);
  const HoldPlan plan = config.holds ? *config.holds : default_holds(config.wall);
  const RigidTransform g = wall_to_world(config.wall);

  // Every hold the plan rests on must be present in the scene.
  if (scene.vertices.empty()) throw ValidationError("synthetic motion: empty scene");
  const geometry::NeighborIndex scene_index(scene.vertices);
  const Vec3& rest_root = model.rest_joints()[0];
  for (int l = 0; l < 4; ++l) {
    for (const Vec3& target : {plan[l].start, plan[l].end}) {
      const int end = limbs()[l].end;
      const int probe = tmpl.groups[l].front();
      const Vec3 v = g.apply(end_rotation(l) * (model.shaped_vertices()[probe] - model.rest_joints()[end]) + target);
      if (scene_index.nearest(v).squared_distance > 1e-12) {
        throw ValidationError("synthetic motion: scene has no hold for contact group " + std::to_string(l));
      }
    }
  }

  const auto n = static_cast<std::size_t>(config.n_frames);
  MotionSequence m;
  m.frame_rate = config.frame_rate;
  m.beta = config.beta;
  m.frame = Frame::kWorld;
  m.translation.resize(n);
  m.pose.resize(n);
  const Vec3 rise = kRise * progress_direction(config.wall);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n - 1);
    const Vec3 translation = root_start() + t * rise;
    Pose pose;
    pose.fill(Vec3::Zero());
    for (int l = 0; l < 4; ++l) {
      solve_limb(model, l, translation, pose, limb_target(plan[l], l, t), end_rotation(l));
    }
    const auto [t_world, root_world] =
        body::transform_root(g.rotation(), g.translation(), translation, pose[0], rest_root);
    m.translation[k] = t_world;
    pose[0] = root_world;
    m.pose[k] = pose;
  }
  m.validate();
  return m;
}

std::vector<PointCloudFrame> simulate_lidar(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                                            const Vec3& sensor, const SynthConfig& config) {
  config.validate();
  motion.validate();
  const auto posed = body::skin_all(tmpl, motion);
  std::vector<PointCloudFrame> out(motion.size());
  for (std::size_t k = 0; k < motion.size(); ++k) {
    const Points& verts = posed[k].vertices;
    const geometry::ConvexHull hull = geometry::convex_hull_3d(verts);
    bool inside = true;
    for (const Face& f : hull.faces) {
      const Vec3 n = (verts[f[1]] - verts[f[0]]).cross(verts[f[2]] - verts[f[0]]);
      if (n.dot(sensor - verts[f[0]]) > 0.0) {
        inside = false;
        break;
      }
    }
    if (inside) throw DegenerateInput("simulate_lidar: sensor is inside the body at frame " + std::to_string(k));

    std::vector<int> visible = geometry::hpr(verts, sensor, 2.0);
    auto rng = stream(config.seed, k, 0x11da);
    if (config.points_per_frame > 0 && static_cast<std::size_t>(config.points_per_frame) < visible.size()) {
      std::shuffle(visible.begin(), visible.end(), rng);
      visible.resize(static_cast<std::size_t>(config.points_per_frame));
      std::sort(visible.begin(), visible.end());
    }
    PointCloudFrame& cloud = out[k];
    cloud.frame = Frame::kWorld;
    cloud.label = CloudLabel::kHuman;
    cloud.timestamp = static_cast<double>(k) / motion.frame_rate;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int i : visible) {
      Vec3 p = verts[i];
      if (config.lidar_sigma > 0.0) {
        for (int c = 0; c < 3; ++c) p[c] += config.lidar_sigma * noise(rng);
      }
      cloud.points.push_back(p);
    }
  }
  return out;
}

MotionSequence corrupt(const MotionSequence& motion, const SynthConfig& config) {
  config.validate();
  motion.validate();
  MotionSequence out = motion;
  const std::size_t n = motion.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double f = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    out.translation[k] += f * config.drift;
    if (config.pose_sigma > 0.0) {
      auto rng = stream(config.seed, k, 0xc0de);
      std::normal_distribution<double> noise(0.0, 1.0);
      for (int j = 1; j < kNumJoints; ++j) {
        for (int c = 0; c < 3; ++c) out.pose[k][j][c] += config.pose_sigma * noise(rng);
      }
    }
  }
  return out;
}

Fixture make_fixture(const SynthConfig& config) {
  config.validate();
  Fixture f{body::make_synthetic_template(config.template_vertices, config.seed), {}, {}, {}, {}, {}};
  f.scene = generate_scene(config, f.tmpl);
  f.truth = generate_motion(config, f.tmpl, f.scene);
  f.init = corrupt(f.truth, config);
  const Vec3 sensor = default_sensor_position(config);
  f.clouds = simulate_lidar(f.tmpl, f.truth, sensor, config);
  f.lidar_trajectory.assign(f.truth.size(), sensor);
  return f;
}

}  // namespace scenefit::synth
