#include "scenefit/body.hpp"
#include "scenefit/metrics.hpp"
#include "scenefit/optimize.hpp"
#include "scenefit/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

using namespace scenefit;
using namespace scenefit::optimize;
using losses::Stage;

namespace {

synth::Fixture make(int frames, double drift, double pose_sigma, std::uint64_t seed = 7) {
  synth::SynthConfig c;
  c.seed = seed;
  c.n_frames = frames;
  c.drift = Vec3(0, 0, drift);
  c.pose_sigma = pose_sigma;
  return synth::make_fixture(c);
}

const synth::Fixture& small_fixture() {
  static const synth::Fixture f = make(12, 0.1, 0.05);
  return f;
}

losses::SequenceInputs inputs_of(const synth::Fixture& f) {
  losses::SequenceInputs in;
  in.tmpl = &f.tmpl;
  in.scene = &f.scene;
  in.clouds = &f.clouds;
  in.lidar_trajectory = f.lidar_trajectory;
  return in;
}

metrics::JointSequence joints_of(const body::BodyTemplate& tmpl, const MotionSequence& m) {
  metrics::JointSequence out;
  for (const body::PosedBody& p : body::skin_all(tmpl, m)) out.push_back(p.joints);
  return out;
}

OptimizerConfig short_config(int annotate, int post) {
  OptimizerConfig c = OptimizerConfig::defaults();
  c.schedule[0].max_iters = annotate;
  c.schedule[1].max_iters = post;
  c.gate_refresh_period = 10;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, MatchesScalarRecurrence) {
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Eigen::VectorXd x(2);
  x << 1.0, -2.0;
  AdamState state(2);
  const Eigen::Vector2d g(0.3, -1.7);
  double m0 = 0, v0 = 0, x0 = 1.0;
  for (int t = 1; t <= 20; ++t) {
    adam_step(x, state, g, cfg);
    m0 = 0.9 * m0 + 0.1 * g[0];
    v0 = 0.999 * v0 + 0.001 * g[0] * g[0];
    const double mh = m0 / (1 - std::pow(0.9, t));
    const double vh = v0 / (1 - std::pow(0.999, t));
    x0 -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(x[0], x0, 1e-12) << t;
  }
  EXPECT_EQ(state.step, 20);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const Eigen::VectorXd before = x;
  AdamState state(5);
  for (int i = 0; i < 10; ++i) adam_step(x, state, Eigen::VectorXd::Zero(5), AdamConfig{});
  EXPECT_EQ(x, before);
}

TEST(Adam, SizeMismatch) {
  Eigen::VectorXd x(3);
  AdamState state(3);
  EXPECT_THROW(adam_step(x, state, Eigen::VectorXd::Zero(2), AdamConfig{}), std::invalid_argument);
}

TEST(Adam, DescendsConvexQuadratic) {
  const Eigen::Vector3d a(1.0, 10.0, 0.1), c(0.5, -0.3, 2.0);
  auto f = [&](const Eigen::VectorXd& x) { return (a.array() * (x - c).array().square()).sum(); };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  const double f0 = f(x);
  AdamState state(3);
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd g = 2.0 * (a.array() * (x - c).array()).matrix();
    adam_step(x, state, g, AdamConfig{});
  }
  EXPECT_LT(f(x), 0.01 * f0);
}

// ---------------------------------------------------------------------------
// Finite differences

TEST(FiniteDifference, SquaredNorm) {
  Eigen::VectorXd x(4);
  x << 0.5, -1.0, 2.0, 0.0;
  auto f = [](const Eigen::VectorXd& v) { return v.squaredNorm(); };
  const double h = 1e-6;
  // Forward error is exactly h per coordinate for a unit-curvature quadratic.
  EXPECT_LT((gradient(f, x, h, FdMode::kForward) - 2.0 * x).cwiseAbs().maxCoeff(), 2 * h);
  EXPECT_LT((gradient(f, x, h, FdMode::kCentral) - 2.0 * x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FiniteDifference, ConstantAndNonFinite) {
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  EXPECT_EQ(gradient([](const Eigen::VectorXd&) { return 4.0; }, x), Eigen::VectorXd::Zero(3));
  EXPECT_THROW(gradient([](const Eigen::VectorXd&) { return std::nan(""); }, x), std::domain_error);
  EXPECT_THROW(gradient([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, x, 0.0), std::invalid_argument);
}

TEST(Pack, RoundTrip) {
  const synth::Fixture& f = small_fixture();
  const Eigen::VectorXd x = pack(f.init);
  EXPECT_EQ(x.size(), static_cast<Eigen::Index>(f.init.size()) * kParamsPerFrame);
  MotionSequence m = f.truth;
  unpack(x, m);
  EXPECT_EQ(pack(m), x);
  EXPECT_EQ(m.beta, f.truth.beta);
}

// ---------------------------------------------------------------------------
// Objective

class ObjectiveTest : public ::testing::TestWithParam<Stage> {};

TEST_P(ObjectiveTest, LocalGradientMatchesGlobalDifferences) {
  const synth::Fixture& f = small_fixture();
  const Stage stage = GetParam();
  Objective obj(inputs_of(f), stage, OptimizerConfig::default_weights(stage), {}, f.init.beta);
  const Eigen::VectorXd x = pack(f.init);
  obj.refresh(x);
  const double h = 1e-7;
  const Eigen::VectorXd g = obj.gradient(x, h, FdMode::kForward);
  const double f0 = obj.evaluate(x).total;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % x.size());
    Eigen::VectorXd p = x;
    p[i] += h;
    const double global = (obj.evaluate(p).total - f0) / h;
    EXPECT_NEAR(g[i], global, 1e-5 * std::max(1.0, std::abs(global))) << i;
  }
}

TEST_P(ObjectiveTest, ForwardAgreesWithCentral) {
  const synth::Fixture& f = small_fixture();
  const Stage stage = GetParam();
  Objective obj(inputs_of(f), stage, OptimizerConfig::default_weights(stage), {}, f.init.beta);
  // The fixture's pelvis moves at constant velocity, which puts L_joints exactly on
  // the kink of its norm. Random points are taken off that set.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 0.01);
  Eigen::VectorXd x = pack(f.init);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += noise(rng);
  obj.refresh(x);
  const Eigen::VectorXd fwd = obj.gradient(x, 1e-7, FdMode::kForward);
  const Eigen::VectorXd ctr = obj.gradient(x, 1e-7, FdMode::kCentral);
  int checked = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(ctr[i]) <= 1e-6) continue;
    ++checked;
    EXPECT_LT(std::abs(fwd[i] - ctr[i]) / std::abs(ctr[i]), 1e-3) << i;
  }
  EXPECT_GT(checked, 100);
}

TEST_P(ObjectiveTest, PerturbationStaysInsideStencil) {
  const synth::Fixture& f = small_fixture();
  const Stage stage = GetParam();
  losses::LossWeights w = losses::LossWeights::ones();
  Objective obj(inputs_of(f), stage, w, {}, f.init.beta);
  const Eigen::VectorXd x = pack(f.init);
  obj.refresh(x);
  const std::size_t n = f.init.size();
  std::mt19937_64 rng(9);
  for (std::size_t k : {std::size_t{0}, std::size_t{5}, n - 1}) {
    Eigen::VectorXd p = x;
    for (int c = 0; c < kParamsPerFrame; ++c) p[k * kParamsPerFrame + c] += 1e-3 * (static_cast<double>(rng() % 7) - 3);
    // The whole change of the total is seen by frame k's local value.
    const double d_total = obj.evaluate(p).total - obj.evaluate(x).total;
    const double d_local = obj.local_value(p, k) - obj.local_value(x, k);
    EXPECT_NEAR(d_total, d_local, 1e-12 * std::max(1.0, obj.evaluate(x).total)) << k;
    // Frames whose stencil cannot reach k are untouched.
    for (std::size_t j = 0; j < n; ++j) {
      if (j + 4 < k || j > k + 4) EXPECT_EQ(obj.local_value(p, j), obj.local_value(x, j)) << k << " " << j;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Stages, ObjectiveTest, ::testing::Values(Stage::kAnnotate, Stage::kPostprocess),
                         [](const auto& info) { return std::string(losses::to_string(info.param)); });

TEST(Objective, GatesAreFrozenUntilRefresh) {
  const synth::Fixture& f = small_fixture();
  Objective obj(inputs_of(f), Stage::kAnnotate, OptimizerConfig::default_weights(Stage::kAnnotate), {},
                f.init.beta);
  EXPECT_FALSE(obj.refreshed());
  const Eigen::VectorXd x = pack(f.init);
  obj.refresh(x);
  EXPECT_TRUE(obj.refreshed());
  EXPECT_GT(obj.gates().mean_visible, 0.0);
  const GateSnapshot before = obj.gates();
  Eigen::VectorXd far = x;
  far.segment(0, 3) += Vec3(0.5, 0, 0);
  obj.evaluate(far);
  EXPECT_EQ(obj.gates().mean_visible, before.mean_visible);
  EXPECT_EQ(obj.gates().stable_frames, before.stable_frames);
}

// ---------------------------------------------------------------------------
// Driver

TEST(Refine, GroundTruthIsFixedPoint) {
  const synth::Fixture f = make(12, 0.0, 0.0);
  const auto [out, report] = refine_sequence(f.truth, inputs_of(f), {}, short_config(20, 20));
  ASSERT_FALSE(report.aborted);
  for (const StageReport& s : report.stages) {
    EXPECT_LT(s.initial_loss, 1e-12);
    EXPECT_TRUE(s.converged);
    EXPECT_EQ(s.iterations, 0);
  }
  EXPECT_EQ(pack(out), pack(f.truth));
  EXPECT_EQ(report.delta.max_translation, 0.0);
}

TEST(Refine, ReducesErrorAndTracksBest) {
  const synth::Fixture f = make(20, 0.3, 0.05);
  const auto [out, report] = refine_sequence(f.init, inputs_of(f), {}, short_config(60, 20));
  ASSERT_FALSE(report.aborted);
  const double before = metrics::mpjpe(joints_of(f.tmpl, f.init), joints_of(f.tmpl, f.truth));
  const double after = metrics::mpjpe(joints_of(f.tmpl, out), joints_of(f.tmpl, f.truth));
  EXPECT_LT(after, before);
  EXPECT_LE(report.history.size(), 80u);
  int stage = -1;
  double best = 0.0;
  for (const IterationRecord& r : report.history) {
    if (r.stage != stage) {
      stage = r.stage;
      best = r.best;
    }
    EXPECT_LE(r.best, best);
    EXPECT_LE(r.best, r.total);
    best = r.best;
  }
  for (const StageReport& s : report.stages) EXPECT_LE(s.best_loss, s.initial_loss);
  EXPECT_EQ(out.beta, f.init.beta);
}

TEST(Refine, Deterministic) {
  const synth::Fixture& f = small_fixture();
  const auto a = refine_sequence(f.init, inputs_of(f), {}, short_config(15, 10));
  const auto b = refine_sequence(f.init, inputs_of(f), {}, short_config(15, 10));
  EXPECT_EQ(pack(a.first), pack(b.first));
  EXPECT_EQ(report_to_json(a.second), report_to_json(b.second));
  EXPECT_EQ(report_to_csv(a.second), report_to_csv(b.second));
}

TEST(Refine, DivergenceAborts) {
  const synth::Fixture& f = small_fixture();
  OptimizerConfig c = short_config(30, 10);
  c.schedule[0].learning_rate = 5.0;
  const auto [out, report] = refine_sequence(f.init, inputs_of(f), {}, c);
  ASSERT_TRUE(report.aborted);
  ASSERT_EQ(report.stages.size(), 1u);
  EXPECT_TRUE(report.stages[0].aborted);
  EXPECT_NE(report.stages[0].abort_reason.find("diverged"), std::string::npos);
  EXPECT_TRUE(pack(out).allFinite());
  const auto json = nlohmann::json::parse(report_to_json(report));
  EXPECT_TRUE(json["aborted"].get<bool>());
  EXPECT_EQ(json["stages"][0]["abort_reason"], report.stages[0].abort_reason);
}

// Sum of every stage objective at `m`, gates refreshed at `m`.
double total_loss(const MotionSequence& m, const losses::SequenceInputs& in, const OptimizerConfig& c) {
  double total = 0.0;
  const Eigen::VectorXd x = pack(m);
  for (const StageSpec& s : c.schedule) {
    Objective o(in, s.stage, s.weights, {}, m.beta);
    o.refresh(x);
    total += o.evaluate(x).total;
  }
  return total;
}

TEST(Refine, RefiningRefinedOutputIsNearlyIdempotent) {
  const synth::Fixture f = make(40, 0.3, 0.05);
  // Both stages must run to convergence: the default POSTPROCESS budget stops
  // early and a second pass keeps descending.
  OptimizerConfig c = OptimizerConfig::defaults();
  c.schedule[1].max_iters = 1000;
  const auto in = inputs_of(f);
  const auto first = refine_sequence(f.init, in, {}, c);
  ASSERT_FALSE(first.second.aborted);
  // From a refined start the first Adam steps spike the loss well past the
  // divergence factor; that transient must not abort the run.
  const auto second = refine_sequence(first.first, in, {}, c);
  ASSERT_FALSE(second.second.aborted) << second.second.stages.back().abort_reason;
  const double before = total_loss(first.first, in, c);
  const double after = total_loss(second.first, in, c);
  EXPECT_LT(std::abs(after - before), 0.01 * before) << before << " -> " << after;
}

TEST(Refine, ReportJson) {
  const synth::Fixture& f = small_fixture();
  const auto [out, report] = refine_sequence(f.init, inputs_of(f), {}, short_config(5, 5));
  const auto j = nlohmann::json::parse(report_to_json(report));
  EXPECT_EQ(j["stages"].size(), 2u);
  EXPECT_EQ(j["stages"][0]["stage"], "ANNOTATE");
  EXPECT_EQ(j["history"].size(), report.history.size());
  EXPECT_FALSE(j.contains("wall_time_seconds"));
  EXPECT_TRUE(nlohmann::json::parse(report_to_json(report, true)).contains("wall_time_seconds"));
  const std::string csv = report_to_csv(report);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), report.history.size() + 1);
}

TEST(OptimizerConfig, Validation) {
  EXPECT_NO_THROW(OptimizerConfig::defaults().validate());
  OptimizerConfig c = OptimizerConfig::defaults();
  c.adam.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = OptimizerConfig::defaults();
  c.schedule[1].learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = OptimizerConfig::defaults();
  c.gate_refresh_period = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  const OptimizerConfig d = OptimizerConfig::defaults();
  ASSERT_EQ(d.schedule.size(), 2u);
  EXPECT_EQ(d.schedule[0].stage, Stage::kAnnotate);
  EXPECT_EQ(d.schedule[0].max_iters, 300);
  EXPECT_EQ(d.schedule[1].stage, Stage::kPostprocess);
  EXPECT_EQ(d.schedule[1].max_iters, 200);
}
