#pragma once

#include "scenefit/body.hpp"
#include "scenefit/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace scenefit::synth {

enum class WallType { kHorizontal, kVertical, kOverhang };

std::string_view to_string(WallType wall);
WallType wall_type_from_string(std::string_view name);

/// Start and end hold of one limb: the position of its end joint (ankle or
/// wrist) in the wall frame while it rests on the hold.
struct LimbPath {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
};

/// Limb order: left foot, right foot, left hand, right hand.
using HoldPlan = std::array<LimbPath, 4>;

struct SynthConfig {
  std::uint64_t seed = 7;
  WallType wall = WallType::kVertical;
  double wall_width = 4.0;   // m, along x
  double wall_height = 3.0;  // m, along z
  int n_frames = 200;
  double frame_rate = 30.0;
  std::optional<HoldPlan> holds;  // defaults depend on the wall type
  double lidar_sigma = 0.0;       // m
  double pose_sigma = 0.0;        // rad
  Vec3 drift = Vec3::Zero();      // m, reached at the last frame
  int points_per_frame = 0;       // 0 keeps every visible vertex
  int template_vertices = 400;
  Shape beta = Shape::Zero();

  /// Throws ValidationError.
  void validate() const;
};

// Fixed layout of the climbing fixture, in the wall frame (x along the wall,
// y towards the wall, z up).
inline constexpr double kWallOffset = 0.42;       // wall plane y
inline constexpr double kHoldDepth = 0.05;        // hand holds stand off the wall by this much
inline constexpr double kGridSpacing = 0.1;       // wall and ground tessellation
inline constexpr double kRise = 0.2;              // root travel over the sequence
inline constexpr double kMoveDuration = 0.14;     // fraction of the sequence per limb move
inline constexpr double kLift = 0.06;             // limb retreat from the wall mid-move
inline constexpr double kFootClearance = 0.04;    // feet pass this far above a ledge
inline constexpr double kOverhangDegrees = 10.0;
/// Move start times as sequence fractions, indexed like HoldPlan.
inline constexpr std::array<double, 4> kMoveStart = {0.32, 0.76, 0.54, 0.10};

HoldPlan default_holds(WallType wall);
/// Wall frame -> world.
RigidTransform wall_to_world(WallType wall);
Vec3 root_start();  // wall frame
Vec3 default_sensor_position(const SynthConfig& config);  // world

/// Wall and ground grids plus one planar hold per (limb, start/end) shaped like
/// the limb's contact plate with one extra ring of grid points. Needs the body
/// template because holds are imprints of its plates.
SceneMesh generate_scene(const SynthConfig& config, const body::BodyTemplate& tmpl);

/// Ground-truth climbing motion: constant-velocity root, one limb move at a
/// time by two-bone IK. Throws DegenerateInput when a hold is out of reach and
/// ValidationError when `scene` has no hold where the plan needs one.
MotionSequence generate_motion(const SynthConfig& config, const body::BodyTemplate& tmpl, const SceneMesh& scene);

/// HUMAN clouds in WORLD: the HPR-visible posed vertices seen from `sensor`,
/// subsampled and perturbed by Gaussian noise. Throws DegenerateInput when the
/// sensor is inside the body's convex hull.
std::vector<PointCloudFrame> simulate_lidar(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                                            const Vec3& sensor, const SynthConfig& config);

/// Degraded initialization: linear root drift 0 -> config.drift and i.i.d.
/// axis-angle noise on joints 1..23.
MotionSequence corrupt(const MotionSequence& motion, const SynthConfig& config);

/// Everything an experiment needs, generated from one config.
struct Fixture {
  body::BodyTemplate tmpl;
  SceneMesh scene;
  MotionSequence truth;
  MotionSequence init;
  std::vector<PointCloudFrame> clouds;
  Points lidar_trajectory;
};

Fixture make_fixture(const SynthConfig& config);

}  // namespace scenefit::synth
