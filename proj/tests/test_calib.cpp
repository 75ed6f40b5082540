#include "scenefit/body.hpp"
#include "scenefit/calib.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace scenefit;
using namespace scenefit::calib;

namespace {

MotionSequence random_motion(std::mt19937_64& rng, std::size_t n, Frame frame) {
  std::normal_distribution<double> g(0.0, 0.3);
  MotionSequence m = test::static_motion(n);
  for (std::size_t k = 0; k < n; ++k) {
    m.translation[k] = Vec3(g(rng), g(rng), g(rng) + 1.0);
    for (Vec3& r : m.pose[k]) r = Vec3(g(rng), g(rng), g(rng));
  }
  m.frame = frame;
  return m;
}

}  // namespace

TEST(LidarCalibration, PaperMatrixForAxisAlignedPlanes) {
  CalibrationInput in;
  in.plane_normal = Vec3(0, 1, 0);
  in.ground_normal = Vec3(0, 0, 1);
  in.lidar_height = 1.5;
  const LidarCalibration c = coarse_calibration_lidar(in);
  EXPECT_LT((c.transform.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((c.transform.translation() - Vec3(0, 0.2, 1.5)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(c.transform.source(), Frame::kLidar);
  EXPECT_EQ(c.transform.target(), Frame::kWorld);
  EXPECT_EQ(c.deviation, 0.0);
  EXPECT_EQ(c.raw_deviation, 0.0);
}

TEST(LidarCalibration, FirstRowIsCrossProduct) {
  CalibrationInput in;
  in.plane_normal = Vec3(1, 0, 0);
  in.ground_normal = Vec3(0, 0, 1);
  const LidarCalibration c = coarse_calibration_lidar(in);
  EXPECT_LT((c.transform.rotation().row(0).transpose() - Vec3(0, -1, 0)).norm(), 1e-15);
}

TEST(LidarCalibration, ParallelNormalsRejected) {
  CalibrationInput in;
  in.plane_normal = Vec3(0, 0, 1);
  in.ground_normal = Vec3(0, 0, 1);
  EXPECT_THROW(coarse_calibration_lidar(in), ValidationError);
  in.plane_normal = Vec3(0, 0.1, 0.995).normalized();
  EXPECT_THROW(coarse_calibration_lidar(in), ValidationError);
}

TEST(LidarCalibration, NonUnitNormalsRejected) {
  CalibrationInput in;
  in.plane_normal = Vec3(0, 2, 0);
  EXPECT_THROW(coarse_calibration_lidar(in), ValidationError);
}

TEST(LidarCalibration, OrthogonalInputsGiveZeroDeviation) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Mat3 r = test::random_rotation(rng, std::numbers::pi);
    CalibrationInput in;
    in.plane_normal = r.col(1);
    in.ground_normal = r.col(2);
    in.lidar_height = 2.0;
    const LidarCalibration c = coarse_calibration_lidar(in);
    EXPECT_LT(c.deviation, 1e-12);
    EXPECT_LT(c.raw_deviation, 1e-12);
    // The rows are e, m, g, so the transform maps the measured normals onto the world axes.
    EXPECT_LT((c.transform.rotation() * in.plane_normal - Vec3::UnitY()).norm(), 1e-12);
    EXPECT_LT((c.transform.rotation() * in.ground_normal - Vec3::UnitZ()).norm(), 1e-12);
  }
}

TEST(LidarCalibration, NoisyNormalsAreOrthonormalized) {
  CalibrationInput in;
  in.plane_normal = Vec3(0.03, 1, 0.05).normalized();
  in.ground_normal = Vec3(-0.02, 0.04, 1).normalized();
  in.lidar_height = 1.2;
  const LidarCalibration c = coarse_calibration_lidar(in);
  EXPECT_GT(c.raw_deviation, 1e-3);
  EXPECT_LE(c.deviation, 1e-12);
  EXPECT_NEAR(c.transform.rotation().determinant(), 1.0, 1e-12);
}

TEST(LidarCalibration, ForwardOffsetIsConfigurable) {
  CalibrationInput in;
  in.lidar_height = 1.0;
  EXPECT_EQ(coarse_calibration_lidar(in, 0.5).transform.translation(), Vec3(0, 0.5, 1.0));
}

TEST(ImuCalibration, AxisMapping) {
  const RigidTransform t = coarse_calibration_imu();
  EXPECT_EQ(t.source(), Frame::kImu);
  EXPECT_EQ(t.target(), Frame::kWorld);
  EXPECT_LT((t.apply(Vec3(1, 0, 0)) - Vec3(-1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((t.apply(Vec3(0, 0, 1)) - Vec3(0, 1, 0)).norm(), 1e-15);
  EXPECT_LT((t.apply(Vec3(0, 1, 0)) - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_NEAR(t.rotation().determinant(), 1.0, 1e-15);
  EXPECT_LT((compose(t.inverse(), t).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(WorldFromCamera, IdentityOnlyRetags) {
  std::mt19937_64 rng(2);
  const MotionSequence cam = random_motion(rng, 4, Frame::kCamera);
  const MotionSequence world = world_from_camera(RigidTransform(Frame::kWorld, Frame::kCamera), cam);
  EXPECT_EQ(world.frame, Frame::kWorld);
  for (std::size_t k = 0; k < cam.size(); ++k) {
    EXPECT_LT((world.translation[k] - cam.translation[k]).norm(), 1e-15);
    for (int j = 0; j < kNumJoints; ++j) EXPECT_LT((world.pose[k][j] - cam.pose[k][j]).norm(), 1e-12);
  }
}

TEST(WorldFromCamera, PureTranslationShiftsByInverse) {
  std::mt19937_64 rng(3);
  const MotionSequence cam = random_motion(rng, 3, Frame::kCamera);
  const Vec3 d(0.5, -1, 2);
  const auto omega = RigidTransform::from_parts(Mat3::Identity(), d, Frame::kWorld, Frame::kCamera);
  const MotionSequence world = world_from_camera(omega, cam);
  for (std::size_t k = 0; k < cam.size(); ++k) EXPECT_LT((world.translation[k] - (cam.translation[k] - d)).norm(), 1e-15);
}

TEST(WorldFromCamera, SkinnedVerticesMatchInverseExtrinsic) {
  std::mt19937_64 rng(4);
  const body::BodyTemplate tmpl = body::make_synthetic_template(300, 4);
  const MotionSequence cam = random_motion(rng, 3, Frame::kCamera);
  const auto omega = RigidTransform::from_parts(test::random_rotation(rng, std::numbers::pi), Vec3(1, 2, -0.5),
                                                Frame::kWorld, Frame::kCamera);
  const body::BodyModel model(tmpl, cam.beta);
  const MotionSequence world = world_from_camera(omega, cam, model.rest_joints()[0]);
  const RigidTransform inv = omega.inverse();
  for (std::size_t k = 0; k < cam.size(); ++k) {
    const Points expected = inv.apply(body::skin(tmpl, cam, k).vertices);
    EXPECT_LT(test::max_deviation(body::skin(tmpl, world, k).vertices, expected), 1e-9);
    for (int j = 1; j < kNumJoints; ++j) EXPECT_EQ(world.pose[k][j], cam.pose[k][j]);
  }
}

TEST(WorldFromCamera, RoundTripIsIdentity) {
  std::mt19937_64 rng(5);
  const MotionSequence cam = random_motion(rng, 5, Frame::kCamera);
  const auto omega = RigidTransform::from_parts(test::random_rotation(rng, 2.0), Vec3(0.1, 0.2, 0.3),
                                                Frame::kWorld, Frame::kCamera);
  const Vec3 root(0.01, -0.02, 0.03);
  const MotionSequence back = camera_from_world(omega, world_from_camera(omega, cam, root), root);
  EXPECT_EQ(back.frame, Frame::kCamera);
  for (std::size_t k = 0; k < cam.size(); ++k) {
    EXPECT_LT((back.translation[k] - cam.translation[k]).norm(), 1e-12);
    EXPECT_LT((rotation_from_axis_angle(back.pose[k][0]) - rotation_from_axis_angle(cam.pose[k][0])).norm(), 1e-12);
  }
}

TEST(WorldFromCamera, FrameMismatch) {
  std::mt19937_64 rng(6);
  const MotionSequence world = random_motion(rng, 2, Frame::kWorld);
  EXPECT_THROW(world_from_camera(RigidTransform(Frame::kWorld, Frame::kCamera), world), FrameMismatch);
  EXPECT_THROW(world_from_camera(RigidTransform(Frame::kLidar, Frame::kWorld),
                                 random_motion(rng, 2, Frame::kCamera)),
               FrameMismatch);
}

TEST(Ransac, FindsDominantPlane) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.003);
  const Vec3 n = Vec3(0.1, -0.2, 1.0).normalized();
  const Vec3 a = n.unitOrthogonal();
  const Vec3 b = n.cross(a);
  Points pts;
  for (int i = 0; i < 400; ++i) pts.push_back(u(rng) * a + u(rng) * b + (1.5 + noise(rng)) * n);
  for (int i = 0; i < 100; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
  RansacConfig cfg;
  cfg.seed = 3;
  const PlaneFit fit = fit_plane_ransac(pts, cfg);
  EXPECT_GT(std::abs(fit.normal.dot(n)), 1.0 - 1e-4);
  EXPECT_NEAR(std::abs(fit.offset), 1.5, 0.01);
  EXPECT_GE(fit.inliers.size(), 390u);
  EXPECT_TRUE(std::is_sorted(fit.inliers.begin(), fit.inliers.end()));
  // Same seed, same answer.
  EXPECT_EQ(fit_plane_ransac(pts, cfg).inliers, fit.inliers);
}

TEST(Ransac, TooFewPoints) {
  EXPECT_THROW(fit_plane_ransac(Points{Vec3::Zero(), Vec3::UnitX()}), DegenerateInput);
}
