#include "scenefit/core.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace scenefit;

namespace {

constexpr double kPi = std::numbers::pi;

RigidTransform rz(double angle, Frame src = Frame::kWorld, Frame dst = Frame::kWorld) {
  return RigidTransform::from_parts(rotation_from_axis_angle(Vec3(0, 0, angle)), Vec3::Zero(), src, dst);
}

}  // namespace

TEST(Compose, IdentityWithIdentity) {
  const RigidTransform id(Frame::kWorld, Frame::kWorld);
  const RigidTransform c = compose(id, id);
  EXPECT_TRUE(c.matrix().isApprox(Mat4::Identity(), 0.0));
}

TEST(Compose, InversePairGivesIdentity) {
  const RigidTransform c = compose(rz(kPi / 2), rz(-kPi / 2));
  EXPECT_LT((c.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Compose, MatchesSequentialApplication) {
  std::mt19937_64 rng(1);
  const auto t1 = RigidTransform::from_parts(test::random_rotation(rng, kPi), Vec3(1, -2, 0.5), Frame::kLidar,
                                             Frame::kWorld);
  const auto t2 = RigidTransform::from_parts(test::random_rotation(rng, kPi), Vec3(-0.3, 0.2, 4), Frame::kImu,
                                             Frame::kLidar);
  const RigidTransform c = compose(t1, t2);
  EXPECT_EQ(c.source(), Frame::kImu);
  EXPECT_EQ(c.target(), Frame::kWorld);
  double worst = 0.0;
  for (const Vec3& p : test::random_points(rng, 100, 5.0)) {
    worst = std::max(worst, (c.apply(p) - t1.apply(t2.apply(p))).norm());
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Compose, FrameMismatchThrows) {
  const RigidTransform a(Frame::kLidar, Frame::kWorld);
  const RigidTransform b(Frame::kImu, Frame::kCamera);
  EXPECT_THROW(compose(a, b), FrameMismatch);
}

TEST(Compose, LongChainsStayOrthonormal) {
  std::mt19937_64 rng(2);
  RigidTransform acc(Frame::kWorld, Frame::kWorld);
  for (int i = 0; i < 10000; ++i) {
    acc = compose(RigidTransform::from_parts(test::random_rotation(rng, kPi), Vec3(0.1, 0, 0), Frame::kWorld,
                                             Frame::kWorld),
                  acc);
  }
  EXPECT_LE(orthonormality_error(acc.rotation()), 1e-9);
}

TEST(RigidTransformTest, RejectsNonOrthonormalBlock) {
  Mat4 m = Mat4::Identity();
  m(0, 0) = 1.1;
  EXPECT_THROW(RigidTransform::from_matrix(m, Frame::kWorld, Frame::kWorld), ValidationError);
  m = Mat4::Identity();
  m(2, 2) = -1.0;  // reflection
  EXPECT_THROW(RigidTransform::from_matrix(m, Frame::kWorld, Frame::kWorld), ValidationError);
}

TEST(RigidTransformTest, InverseRoundTrip) {
  std::mt19937_64 rng(3);
  const auto t = RigidTransform::from_parts(test::random_rotation(rng, kPi), Vec3(0.4, 2, -1), Frame::kCamera,
                                            Frame::kWorld);
  const RigidTransform inv = t.inverse();
  EXPECT_EQ(inv.source(), Frame::kWorld);
  EXPECT_EQ(inv.target(), Frame::kCamera);
  for (const Vec3& p : test::random_points(rng, 50, 3.0)) EXPECT_LT((inv.apply(t.apply(p)) - p).norm(), 1e-12);
}

TEST(ApplyTransform, IdentityLeavesCloudUnchanged) {
  PointCloudFrame c;
  c.frame = Frame::kLidar;
  c.points = {Vec3(1, 2, 3), Vec3(-1, 0, 4)};
  const PointCloudFrame out = apply_transform(RigidTransform(Frame::kLidar, Frame::kLidar), c);
  EXPECT_EQ(out.points, c.points);
}

TEST(ApplyTransform, PureTranslation) {
  PointCloudFrame c;
  c.frame = Frame::kLidar;
  c.points = {Vec3(1, 2, 3)};
  const auto t = RigidTransform::from_parts(Mat3::Identity(), Vec3(0, 0, 1), Frame::kLidar, Frame::kWorld);
  const PointCloudFrame out = apply_transform(t, c);
  EXPECT_EQ(out.frame, Frame::kWorld);
  EXPECT_EQ(out.points[0], Vec3(1, 2, 4));
}

TEST(ApplyTransform, RoundTripThroughInverse) {
  std::mt19937_64 rng(4);
  PointCloudFrame c;
  c.frame = Frame::kWorld;
  c.points = test::random_points(rng, 200, 2.0);
  const auto t = RigidTransform::from_parts(test::random_rotation(rng, kPi), Vec3(1, 1, 1), Frame::kWorld,
                                            Frame::kCamera);
  const PointCloudFrame back = apply_transform(t.inverse(), apply_transform(t, c));
  EXPECT_EQ(back.frame, Frame::kWorld);
  EXPECT_LT(test::max_deviation(back.points, c.points), 1e-12);
}

TEST(ApplyTransform, MismatchedFrameThrows) {
  PointCloudFrame c;
  c.frame = Frame::kImu;
  c.points = {Vec3::Zero()};
  EXPECT_THROW(apply_transform(RigidTransform(Frame::kLidar, Frame::kWorld), c), FrameMismatch);
}

TEST(Rotations, AxisAngleRoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = test::random_rotation(rng, kPi);
    EXPECT_LT((rotation_from_axis_angle(axis_angle_from_rotation(r)) - r).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_LT(axis_angle_from_rotation(Mat3::Identity()).norm(), 1e-15);
  const Vec3 half_turn(0, kPi, 0);
  EXPECT_LT((rotation_from_axis_angle(axis_angle_from_rotation(rotation_from_axis_angle(half_turn))) -
             rotation_from_axis_angle(half_turn))
                .cwiseAbs()
                .maxCoeff(),
            1e-9);
}

TEST(Rotations, NearestRotationIsProper) {
  Mat3 m;
  m << 1.01, 0.02, 0, -0.01, 0.99, 0.03, 0, 0, -1;
  const Mat3 r = nearest_rotation(m);
  EXPECT_LT(orthonormality_error(r), 1e-12);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}

TEST(MotionSequenceTest, Validation) {
  MotionSequence m = test::static_motion(3);
  EXPECT_NO_THROW(m.validate());
  m.translation[1].x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(m.validate(), ValidationError);
  m = test::static_motion(3);
  m.pose.pop_back();
  EXPECT_THROW(m.validate(), ValidationError);
  EXPECT_THROW(MotionSequence{}.validate(), ValidationError);
}

TEST(SceneMeshTest, Validation) {
  SceneMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.normals.assign(3, Vec3::UnitZ());
  m.faces = {{0, 1, 2}};
  EXPECT_NO_THROW(m.validate());
  m.faces = {{0, 1, 3}};
  EXPECT_THROW(m.validate(), ValidationError);
  m.faces = {{0, 1, 1}};
  EXPECT_THROW(m.validate(), ValidationError);
  m.faces = {{0, 1, 2}};
  m.normals[0] = Vec3(0, 0, 2);
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Frames, StringRoundTrip) {
  for (Frame f : {Frame::kImu, Frame::kLidar, Frame::kCamera, Frame::kWorld}) {
    EXPECT_EQ(frame_from_string(to_string(f)), f);
  }
  EXPECT_THROW(frame_from_string("ROBOT"), ValidationError);
  EXPECT_THROW(require_same_frame(Frame::kImu, Frame::kWorld, "test"), FrameMismatch);
}
