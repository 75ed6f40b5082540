#include "scenefit/body.hpp"
#include "scenefit/geometry.hpp"
#include "scenefit/losses.hpp"
#include "scenefit/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace scenefit;
using namespace scenefit::losses;
using body::Group;

namespace {

// Six-vertex toy body: one vertex per contact group, one torso, one limb.
// Only the groups matter to the sequence terms that take posed bodies.
body::BodyTemplate toy_template() {
  body::BodyTemplate t;
  t.groups[static_cast<int>(Group::kLeftFoot)] = {0};
  t.groups[static_cast<int>(Group::kRightFoot)] = {1};
  t.groups[static_cast<int>(Group::kLeftHand)] = {2};
  t.groups[static_cast<int>(Group::kRightHand)] = {3};
  t.groups[static_cast<int>(Group::kTorso)] = {4};
  t.groups[static_cast<int>(Group::kLimbs)] = {0, 1, 2, 3, 5};
  t.groups[static_cast<int>(Group::kStableJoints)] = {0};
  return t;
}

body::PosedBody toy_pose(const Points& v) {
  body::PosedBody p;
  p.vertices = v;
  p.joints.fill(Vec3::Zero());
  return p;
}

Points spread_body() {
  // Binary-exact coordinates so equal steps compare equal.
  return {Vec3(-0.25, 0, 0), Vec3(0.25, 0, 0), Vec3(-0.375, 0, 1.5), Vec3(0.375, 0, 1.5), Vec3(0, 0, 1),
          Vec3(0, 0, 0.5)};
}

SceneMesh point_scene(const Points& p) {
  SceneMesh m;
  m.vertices = p;
  m.normals.assign(p.size(), Vec3::UnitZ());
  return m;
}

// Scene with a vertex under every toy contact vertex.
SceneMesh contact_scene() {
  Points p = spread_body();
  p.resize(4);
  return point_scene(p);
}

std::vector<body::PosedBody> sequence(std::initializer_list<Points> frames) {
  std::vector<body::PosedBody> out;
  for (const Points& f : frames) out.push_back(toy_pose(f));
  return out;
}

Points moved(Points v, int i, const Vec3& d) {
  v[i] += d;
  return v;
}

double brute_one_sided(const Points& from, const Points& to) {
  double sum = 0.0;
  for (const Vec3& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : to) best = std::min(best, (a - b).squaredNorm());
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

const synth::Fixture& fixture() {
  static const synth::Fixture f = [] {
    synth::SynthConfig c;
    c.n_frames = 30;
    return synth::make_fixture(c);
  }();
  return f;
}

SequenceInputs inputs_of(const synth::Fixture& f) {
  SequenceInputs in;
  in.tmpl = &f.tmpl;
  in.scene = &f.scene;
  in.clouds = &f.clouds;
  in.lidar_trajectory = f.lidar_trajectory;
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stability

TEST(Stability, SlowFootAgainstFastSibling) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const auto posed = sequence({b, moved(moved(b, 0, Vec3(0.01, 0, 0)), 1, Vec3(0.10, 0, 0))});
  const SceneMesh mesh = point_scene(b);
  const geometry::SceneIndex scene(mesh);
  const StabilityRecord rec = detect_stable_limbs(t, posed, scene);
  EXPECT_TRUE(rec.is_stable(1, Limb::kLeftFoot));
  EXPECT_FALSE(rec.is_stable(1, Limb::kRightFoot));
  EXPECT_FALSE(rec.environment[1][0].empty());
  EXPECT_TRUE(rec.environment[1][1].empty());
}

TEST(Stability, BothFeetFast) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const auto posed = sequence({b, moved(moved(b, 0, Vec3(0.10, 0, 0)), 1, Vec3(0, 0.10, 0))});
  const SceneMesh mesh = point_scene(b);
  const geometry::SceneIndex scene(mesh);
  const StabilityRecord rec = detect_stable_limbs(t, posed, scene);
  EXPECT_FALSE(rec.is_stable(1, Limb::kLeftFoot));
  EXPECT_FALSE(rec.is_stable(1, Limb::kRightFoot));
}

TEST(Stability, TieIsNotStable) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const double step = 0.0078125;
  const auto posed = sequence({b, moved(moved(b, 0, Vec3(step, 0, 0)), 1, Vec3(0, step, 0))});
  const SceneMesh mesh = point_scene(b);
  const geometry::SceneIndex scene(mesh);
  const StabilityRecord rec = detect_stable_limbs(t, posed, scene);
  EXPECT_FALSE(rec.is_stable(1, Limb::kLeftFoot));
  EXPECT_FALSE(rec.is_stable(1, Limb::kRightFoot));
}

TEST(Stability, ThresholdIsStrict) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const SceneMesh mesh = point_scene(b);
  const geometry::SceneIndex scene(mesh);
  // A step exactly at the threshold is not stable.
  LossParams p;
  p.stable_threshold = 0.25;
  const auto posed = sequence({b, moved(moved(b, 0, Vec3(0.25, 0, 0)), 1, Vec3(0.5, 0, 0))});
  EXPECT_FALSE(detect_stable_limbs(t, posed, scene, p).is_stable(1, Limb::kLeftFoot));
}

TEST(Stability, InvariantsOnFixture) {
  const synth::Fixture& f = fixture();
  const StabilityRecord rec = detect_stable_limbs(f.tmpl, f.truth, f.scene);
  ASSERT_EQ(rec.size(), f.truth.size());
  for (int l = 0; l < kNumLimbs; ++l) EXPECT_FALSE(rec.stable[0][l]);
  std::size_t stable = 0;
  for (std::size_t k = 0; k < rec.size(); ++k) {
    EXPECT_FALSE(rec.stable[k][0] && rec.stable[k][1]);
    EXPECT_FALSE(rec.stable[k][2] && rec.stable[k][3]);
    for (int l = 0; l < kNumLimbs; ++l) {
      EXPECT_EQ(rec.stable[k][l], !rec.environment[k][l].empty());
      stable += rec.stable[k][l];
    }
  }
  EXPECT_GT(stable, 0u);
}

TEST(Stability, NeedsTwoFrames) {
  const body::BodyTemplate t = toy_template();
  const SceneMesh mesh = point_scene(spread_body());
  const geometry::SceneIndex scene(mesh);
  EXPECT_THROW(detect_stable_limbs(t, sequence({spread_body()}), scene), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Contact and sliding

TEST(Contact, CoincidentIsZero) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const SceneMesh scene = contact_scene();
  const auto posed = sequence({b, moved(b, 1, Vec3(0.1, 0, 0))});
  const StabilityRecord rec = detect_stable_limbs(t, posed, geometry::SceneIndex(scene));
  ASSERT_TRUE(rec.is_stable(1, Limb::kLeftFoot));
  EXPECT_EQ(contact_loss(t, posed, scene, rec), 0.0);
}

TEST(Contact, OffsetFootOverClip) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const SceneMesh scene = contact_scene();
  for (int l : {2, 5, 9}) {
    std::vector<body::PosedBody> posed;
    for (int k = 0; k < l; ++k) posed.push_back(toy_pose(b));
    StabilityRecord rec;
    rec.stable.assign(l, {false, false, false, false});
    rec.environment.resize(l);
    // Foot 0.05 m above its scene vertex, stable in exactly one frame.
    posed[1].vertices[0] += Vec3(0, 0, 0.05);
    rec.stable[1][0] = true;
    rec.environment[1][0] = {0, 1};
    EXPECT_NEAR(contact_loss(t, posed, scene, rec), 0.05 / l, 1e-15);
  }
}

TEST(Contact, NoStableLimbsIsZero) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const SceneMesh scene = contact_scene();
  const auto posed = sequence({moved(b, 0, Vec3(0, 0, 1)), moved(b, 0, Vec3(0, 0, 2))});
  StabilityRecord rec;
  rec.stable.assign(2, {false, false, false, false});
  rec.environment.resize(2);
  EXPECT_EQ(contact_loss(t, posed, scene, rec), 0.0);
  StabilityRecord short_rec = rec;
  short_rec.stable.pop_back();
  short_rec.environment.pop_back();
  EXPECT_THROW(contact_loss(t, posed, scene, short_rec), std::invalid_argument);
}

TEST(Contact, IgnoresNonStableVertices) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  const SceneMesh scene = contact_scene();
  const auto posed = sequence({b, moved(b, 0, Vec3(0, 0, 0.02))});
  StabilityRecord rec;
  rec.stable.assign(2, {false, false, false, false});
  rec.environment.resize(2);
  rec.stable[1][0] = true;
  rec.environment[1][0] = {0};
  const double base = contact_loss(t, posed, scene, rec);
  auto changed = posed;
  for (int i : {1, 2, 3, 4, 5}) changed[1].vertices[i] += Vec3(0.3, -0.2, 0.1);
  EXPECT_EQ(contact_loss(t, changed, scene, rec), base);
  EXPECT_EQ(sliding_loss(t, changed, rec), sliding_loss(t, posed, rec));
}

TEST(Sliding, StaticIsZero) {
  const body::BodyTemplate t = toy_template();
  const auto posed = sequence({spread_body(), spread_body(), spread_body()});
  StabilityRecord rec;
  rec.stable.assign(3, {true, false, true, false});
  rec.environment.assign(3, {std::vector<int>{0}, {}, std::vector<int>{2}, {}});
  EXPECT_EQ(sliding_loss(t, posed, rec), 0.0);
}

TEST(Sliding, DriftBetweenStableFrames) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  for (int l : {3, 6}) {
    std::vector<body::PosedBody> posed;
    for (int k = 0; k < l; ++k) posed.push_back(toy_pose(moved(b, 0, Vec3(0.02 * k, 0, 0))));
    StabilityRecord rec;
    rec.stable.assign(l, {false, false, false, false});
    rec.environment.resize(l);
    // Stable in frames 0, 1, 2: two consecutive pairs.
    for (int k = 0; k < 3; ++k) {
      rec.stable[k][0] = true;
      rec.environment[k][0] = {0};
    }
    EXPECT_NEAR(sliding_loss(t, posed, rec), 2 * 0.02 / l, 1e-15);
  }
}

TEST(Sliding, AlternatingLimbsIsZero) {
  const body::BodyTemplate t = toy_template();
  std::vector<body::PosedBody> posed;
  StabilityRecord rec;
  for (int k = 0; k < 6; ++k) {
    posed.push_back(toy_pose(moved(moved(spread_body(), 0, Vec3(0.01 * k, 0, 0)), 1, Vec3(0, 0.01 * k, 0))));
    rec.stable.push_back({k % 2 == 0, k % 2 == 1, false, false});
    rec.environment.emplace_back();
  }
  EXPECT_EQ(sliding_loss(t, posed, rec), 0.0);
}

// ---------------------------------------------------------------------------
// Smoothness

TEST(TransSmooth, StaticLidarIsZero) {
  MotionSequence m = test::static_motion(5);
  for (std::size_t k = 0; k < 5; ++k) m.translation[k] = Vec3(0.3 * k * k, 0, 0);
  EXPECT_EQ(trans_smooth_loss(m, Points(5, Vec3(1, 2, 3))), 0.0);
}

TEST(TransSmooth, HingeArithmetic) {
  for (int l : {2, 5, 10}) {
    MotionSequence m = test::static_motion(l);
    Points lidar(l);
    for (int k = 0; k < l; ++k) {
      m.translation[k] = Vec3(0.4 * k, 0, 0);
      lidar[k] = Vec3(0, 1.0 * k, 0);
    }
    EXPECT_NEAR(trans_smooth_loss(m, lidar), (l - 1) * 0.6 / l, 1e-12);
    // Human faster than the LiDAR: hinge inactive.
    for (int k = 0; k < l; ++k) m.translation[k] = Vec3(1.5 * k, 0, 0);
    EXPECT_EQ(trans_smooth_loss(m, lidar), 0.0);
  }
}

TEST(TransSmooth, MonotoneInHumanStep) {
  Points lidar(6);
  for (int k = 0; k < 6; ++k) lidar[k] = Vec3(0, 0.5 * k, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (double step = 0.0; step <= 0.7; step += 0.05) {
    MotionSequence m = test::static_motion(6);
    for (int k = 0; k < 6; ++k) m.translation[k] = Vec3(step * k, 0, 0);
    const double v = trans_smooth_loss(m, lidar);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(TransSmooth, LengthMismatch) {
  EXPECT_THROW(trans_smooth_loss(test::static_motion(3), Points(2)), std::invalid_argument);
}

TEST(JointSmooth, ConstantVelocityAndStaticAreZero) {
  const body::BodyTemplate& t = fixture().tmpl;
  MotionSequence m = test::static_motion(5);
  EXPECT_EQ(joint_smooth_loss(t, m), 0.0);
  for (int k = 0; k < 5; ++k) m.translation[k] = Vec3(0.25 * k, -0.5 * k, 0.125 * k);
  EXPECT_LT(joint_smooth_loss(t, m), 1e-14);
}

TEST(JointSmooth, VelocityJumpOnThreeFrames) {
  const body::BodyTemplate t = toy_template();
  std::vector<body::PosedBody> posed(3, toy_pose(spread_body()));
  // Stable joint 0 at x = 0, 0.1, 0.5: second difference 0.3.
  for (int k = 0; k < 3; ++k) posed[k].joints[0] = Vec3(k == 0 ? 0.0 : (k == 1 ? 0.1 : 0.5), 0, 0);
  EXPECT_NEAR(joint_smooth_loss(t, posed), 0.3 / 3, 1e-15);
  EXPECT_THROW(joint_smooth_loss(t, std::vector<body::PosedBody>(2, toy_pose(spread_body()))),
               std::invalid_argument);
}

TEST(Sds, StraightLineIsZero) {
  MotionSequence m = test::static_motion(6);
  for (int k = 0; k < 6; ++k) m.translation[k] = Vec3(0.1 * k, 0.05 * k, 0);
  EXPECT_NEAR(sds_loss(m), 0.0, 1e-15);
}

TEST(Sds, RightAngleTurn) {
  for (int l : {3, 7}) {
    MotionSequence m = test::static_motion(l);
    // Along x until frame 1, then along y.
    for (int k = 0; k < l; ++k) m.translation[k] = k <= 1 ? Vec3(0.1 * k, 0, 0) : Vec3(0.1, 0.1 * (k - 1), 0);
    EXPECT_NEAR(sds_loss(m), 1.0 / l, 1e-15);
  }
}

TEST(Sds, SlowFramesAreGated) {
  EXPECT_EQ(sds_loss(test::static_motion(5)), 0.0);
  MotionSequence m = test::static_motion(3);
  m.translation = {Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(0.01, 0.5, 0)};
  EXPECT_EQ(sds_loss(m), 0.0);
}

// ---------------------------------------------------------------------------
// Per-frame terms

TEST(Mesh2Point, ExactVisibleSamplesGiveZero) {
  const synth::Fixture& f = fixture();
  const Points verts = body::skin(f.tmpl, f.truth, 3).vertices;
  const Vec3 eye = f.lidar_trajectory[3];
  Points visible;
  for (int i : geometry::hpr(verts, eye, 2.0)) visible.push_back(verts[i]);
  EXPECT_EQ(mesh2point_loss(verts, visible, eye), 0.0);
  Points shifted = visible;
  for (Vec3& p : shifted) p += Vec3(0.006, 0, 0.008);
  const double v = mesh2point_loss(verts, shifted, eye);
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, 2 * 0.01 * 0.01 + 1e-15);
}

TEST(Mesh2Point, MatchesBruteForceChamfer) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Points verts = test::random_points(rng, 50);
    const Points cloud = test::random_points(rng, 50);
    const Vec3 eye(0, -5, 0);
    Points visible;
    for (int i : geometry::hpr(verts, eye, 2.0)) visible.push_back(verts[i]);
    const double oracle = brute_one_sided(visible, cloud) + brute_one_sided(cloud, visible);
    EXPECT_NEAR(mesh2point_loss(verts, cloud, eye), oracle, 1e-12);
  }
  EXPECT_THROW(mesh2point_loss(Points{Vec3::Zero()}, Points{}, Vec3::UnitX()), std::invalid_argument);
}

TEST(GlobalRefit, Cases) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  LossParams p;
  EXPECT_EQ(global_refit_loss(t, b, b, p), 0.0);
  // One torso vertex (index 4) 0.05 from the only point.
  const Points torso_only = {b[4]};
  const std::vector<int> torso = {4};
  Points v = b;
  v[4] += Vec3(0, 0.05, 0);
  EXPECT_NEAR(global_refit_loss(t, v, torso_only, p, &torso), 0.0025, 1e-15);
  // Limb vertex between d_limb and d_torso: gated out.
  const std::vector<int> limb = {5};
  Points w = b;
  EXPECT_EQ(global_refit_loss(t, w, {b[5] + Vec3(0.07, 0, 0)}, p, &limb), 0.0);
  // Inside d_limb it contributes with w_limb.
  EXPECT_NEAR(global_refit_loss(t, w, {b[5] + Vec3(0.03, 0, 0)}, p, &limb), 2 * 0.03 * 0.03, 1e-15);
  LossParams bad;
  bad.d_limb = 0.2;
  EXPECT_THROW(global_refit_loss(t, b, b, bad), ValidationError);
}

TEST(SceneTouch, HingeOnPenetration) {
  // Wall plane y = 0 sampled on a grid, normals pointing to -y (the free side).
  SceneMesh wall;
  for (int i = -5; i <= 5; ++i) {
    for (int j = -5; j <= 5; ++j) {
      wall.vertices.push_back(Vec3(0.1 * i, 0, 0.1 * j));
      wall.normals.push_back(Vec3(0, -1, 0));
    }
  }
  const geometry::SceneIndex scene(wall);
  Points body(8);
  for (int i = 0; i < 8; ++i) body[i] = Vec3(0.1 * (i - 4), -0.3, 0.1);
  EXPECT_EQ(scene_touch_loss(body, scene), 0.0);
  body[2] = Vec3(0.1, 0.02, 0.2);
  EXPECT_NEAR(scene_touch_loss(body, scene), 0.02 * 0.02 / 8, 1e-15);
  body[2] = Vec3(0.1, 0.0, 0.2);
  EXPECT_EQ(scene_touch_loss(body, scene), 0.0);
}

TEST(Lwd, WeightsAndReduction) {
  const synth::Fixture& f = fixture();
  const Points verts = body::skin(f.tmpl, f.init, 4).vertices;
  const Points& cloud = f.clouds[4].points;
  EXPECT_EQ(lwd_loss(f.tmpl, verts, cloud, PartWeights{0, 0, 0, 0}), 0.0);
  const double uniform = lwd_loss(f.tmpl, verts, cloud, PartWeights{1, 1, 1, 1});
  EXPECT_NEAR(uniform, brute_one_sided(verts, cloud), 1e-12);
  EXPECT_NEAR(lwd_loss(f.tmpl, verts, cloud, PartWeights{2, 2, 2, 2}), 2 * uniform, 1e-12);
  const PartWeights pw{1, 1, 2, 2};
  EXPECT_NEAR(lwd_loss(f.tmpl, verts, cloud, PartWeights{2, 2, 4, 4}), 2 * lwd_loss(f.tmpl, verts, cloud, pw), 1e-12);
}

TEST(Vlr, EndEffectorSupport) {
  const body::BodyTemplate t = toy_template();
  const Points b = spread_body();
  EXPECT_EQ(vlr_loss(t, b, b), 0.0);
  // Only the hand vertex is 0.03 from the cloud; the other contact vertices sit on it.
  Points cloud = b;
  cloud[2] += Vec3(0, 0, 0.03);
  const std::vector<int> hand = {2};
  EXPECT_NEAR(vlr_loss(t, b, cloud, &hand), 9e-4, 1e-15);
  Points moved_body = b;
  moved_body[4] += Vec3(0.5, 0.5, 0.5);
  moved_body[5] += Vec3(-0.5, 0.1, 0.0);
  EXPECT_EQ(vlr_loss(t, moved_body, cloud), vlr_loss(t, b, cloud));
}

// ---------------------------------------------------------------------------
// Totals

TEST(Total, StageMembership) {
  for (Term t : {Term::kContact, Term::kSliding, Term::kTrans, Term::kJoints, Term::kMesh2Point,
                 Term::kGlobalRefit, Term::kSceneTouch}) {
    EXPECT_TRUE(term_in_stage(t, Stage::kAnnotate));
    EXPECT_FALSE(term_in_stage(t, Stage::kPostprocess));
  }
  for (Term t : {Term::kLwd, Term::kSds, Term::kVlr}) {
    EXPECT_FALSE(term_in_stage(t, Stage::kAnnotate));
    EXPECT_TRUE(term_in_stage(t, Stage::kPostprocess));
  }
  for (int i = 0; i < kNumTerms; ++i) EXPECT_EQ(static_cast<int>(term_from_string(to_string(Term(i)))), i);
}

TEST(Total, ZeroWeightsGiveZero) {
  const synth::Fixture& f = fixture();
  for (Stage s : {Stage::kAnnotate, Stage::kPostprocess}) {
    EXPECT_EQ(total_loss(s, LossWeights{}, f.init, inputs_of(f)).total, 0.0);
  }
}

TEST(Total, SingleTermScales) {
  const synth::Fixture& f = fixture();
  const LossBreakdown all = all_terms(f.init, inputs_of(f));
  for (int i = 0; i < kNumTerms; ++i) {
    LossWeights w;
    w.lambda[i] = 3.5;
    const Stage s = term_in_stage(Term(i), Stage::kAnnotate) ? Stage::kAnnotate : Stage::kPostprocess;
    const LossBreakdown b = total_loss(s, w, f.init, inputs_of(f));
    EXPECT_NEAR(b.total, 3.5 * all.terms[i], 1e-12 * std::max(1.0, b.total)) << to_string(Term(i));
  }
}

TEST(Total, BreakdownSumsToTotal) {
  const synth::Fixture& f = fixture();
  LossWeights w;
  for (int i = 0; i < kNumTerms; ++i) w.lambda[i] = 0.5 + i;
  for (Stage s : {Stage::kAnnotate, Stage::kPostprocess}) {
    const LossBreakdown b = total_loss(s, w, f.init, inputs_of(f));
    double sum = 0.0;
    for (int i = 0; i < kNumTerms; ++i) {
      if (term_in_stage(Term(i), s)) {
        sum += w.lambda[i] * b.terms[i];
      } else {
        EXPECT_EQ(b.terms[i], 0.0);
      }
    }
    EXPECT_NEAR(b.total, sum, 1e-12);
    for (double v : b.terms) EXPECT_GE(v, 0.0);
  }
}

TEST(Total, GroundTruthFixtureIsZero) {
  const synth::Fixture& f = fixture();
  const LossBreakdown b = all_terms(f.truth, inputs_of(f));
  for (int i = 0; i < kNumTerms; ++i) EXPECT_LT(b.terms[i], 1e-12) << to_string(Term(i));
}

TEST(Total, MissingInputsRejected) {
  const synth::Fixture& f = fixture();
  SequenceInputs in = inputs_of(f);
  in.scene = nullptr;
  EXPECT_THROW(total_loss(Stage::kAnnotate, LossWeights::ones(), f.init, in), ValidationError);
  EXPECT_NO_THROW(total_loss(Stage::kPostprocess, LossWeights::ones(), f.init, in));
  in = inputs_of(f);
  in.lidar_trajectory.pop_back();
  EXPECT_THROW(total_loss(Stage::kPostprocess, LossWeights::ones(), f.init, in), ValidationError);
  LossWeights negative;
  negative[Term::kSds] = -1;
  EXPECT_THROW(total_loss(Stage::kPostprocess, negative, f.init, inputs_of(f)), ValidationError);
}

TEST(Total, RigidInvariance) {
  const synth::Fixture& f = fixture();
  std::mt19937_64 rng(11);
  const Mat3 r = test::random_rotation(rng, std::numbers::pi);
  const Vec3 t(0.7, -1.3, 0.4);
  const body::BodyModel model(f.tmpl, f.init.beta);
  const Vec3 root = model.rest_joints()[0];

  MotionSequence motion = f.init;
  for (std::size_t k = 0; k < motion.size(); ++k) {
    std::tie(motion.translation[k], motion.pose[k][0]) =
        body::transform_root(r, t, f.init.translation[k], f.init.pose[k][0], root);
  }
  SceneMesh scene = f.scene;
  for (Vec3& v : scene.vertices) v = r * v + t;
  for (Vec3& n : scene.normals) n = r * n;
  std::vector<PointCloudFrame> clouds = f.clouds;
  for (auto& c : clouds) {
    for (Vec3& p : c.points) p = r * p + t;
  }
  SequenceInputs in;
  in.tmpl = &f.tmpl;
  in.scene = &scene;
  in.clouds = &clouds;
  for (const Vec3& p : f.lidar_trajectory) in.lidar_trajectory.push_back(r * p + t);

  const LossBreakdown a = all_terms(f.init, inputs_of(f));
  const LossBreakdown b = all_terms(motion, in);
  for (int i = 0; i < kNumTerms; ++i) EXPECT_NEAR(a.terms[i], b.terms[i], 1e-9) << to_string(Term(i));
}
