#include "scenefit/optimize.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace scenefit::optimize {

using losses::Stage;
using losses::Term;

Eigen::VectorXd gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                         double h, FdMode mode) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("gradient: step must be positive");
  const double f0 = f(x);
  if (!std::isfinite(f0)) throw std::domain_error("gradient: function is not finite at x");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    if (mode == FdMode::kForward) {
      g[i] = (fp - f0) / h;
    } else {
      probe[i] = x[i] - h;
      g[i] = (fp - f(probe)) / (2.0 * h);
    }
    probe[i] = x[i];
  }
  if (!g.allFinite()) throw std::domain_error("gradient: function is not finite near x");
  return g;
}

void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& gradient,
               const AdamConfig& config) {
  if (gradient.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * gradient;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("optimizer: " + msg); };
  if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate)) fail("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(adam.epsilon > 0.0)) fail("epsilon must be positive");
  if (max_iters < 0) fail("max_iters must be >= 0");
  if (!(gradient_step > 0.0) || !std::isfinite(gradient_step)) fail("gradient_step must be positive");
  if (gate_refresh_period < 1) fail("gate_refresh_period must be >= 1");
  if (!(convergence_tol >= 0.0)) fail("convergence_tol must be >= 0");
  if (!(divergence_factor > 1.0)) fail("divergence_factor must exceed 1");
  if (schedule.empty()) fail("stage schedule is empty");
  for (const StageSpec& s : schedule) {
    s.weights.validate();
    if (s.max_iters < 0) fail("stage max_iters must be >= 0");
    if (s.learning_rate && (!(*s.learning_rate > 0.0) || !std::isfinite(*s.learning_rate))) {
      fail("stage learning_rate must be positive");
    }
  }
}

// Chosen by ablation on the synthetic climbing fixture. The cloud terms carry
// most of the pose information; SDS is dimensionless and only needs a nudge.
losses::LossWeights OptimizerConfig::default_weights(Stage stage) {
  losses::LossWeights w;
  for (int t = 0; t < losses::kNumTerms; ++t) {
    w.lambda[t] = losses::term_in_stage(static_cast<Term>(t), stage) ? 1.0 : 0.0;
  }
  if (stage == Stage::kAnnotate) {
    w[Term::kMesh2Point] = 10.0;
    w[Term::kGlobalRefit] = 10.0;
    w[Term::kSceneTouch] = 100.0;
  } else {
    w[Term::kSds] = 1e-3;
  }
  return w;
}

std::optional<double> OptimizerConfig::default_learning_rate(Stage stage) {
  if (stage == Stage::kPostprocess) return 1e-3;
  return std::nullopt;
}

OptimizerConfig OptimizerConfig::defaults() {
  OptimizerConfig c;
  for (const auto& [stage, iters] : {std::pair{Stage::kAnnotate, 300}, std::pair{Stage::kPostprocess, 200}}) {
    c.schedule.push_back({stage, default_weights(stage), iters, default_learning_rate(stage)});
  }
  return c;
}

// ---------------------------------------------------------------------------

namespace {

ParameterDelta parameter_delta(const MotionSequence& a, const MotionSequence& b) {
  ParameterDelta d;
  const std::size_t n = a.size();
  if (n == 0) return d;
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dt = (a.translation[k] - b.translation[k]).norm();
    d.max_translation = std::max(d.max_translation, dt);
    d.mean_translation += dt;
    for (int j = 0; j < kNumJoints; ++j) {
      const Mat3 r = rotation_from_axis_angle(a.pose[k][j]).transpose() * rotation_from_axis_angle(b.pose[k][j]);
      const double angle = axis_angle_from_rotation(r).norm();
      d.max_rotation = std::max(d.max_rotation, angle);
      sum_sq += angle * angle;
    }
  }
  d.mean_translation /= static_cast<double>(n);
  d.rms_rotation = std::sqrt(sum_sq / static_cast<double>(n * kNumJoints));
  return d;
}

}  // namespace

std::pair<MotionSequence, OptimizationReport> refine_sequence(const MotionSequence& init,
                                                              const losses::SequenceInputs& inputs,
                                                              const losses::LossParams& params,
                                                              const OptimizerConfig& config) {
  config.validate();
  params.validate();
  init.validate();
  const auto start = std::chrono::steady_clock::now();

  OptimizationReport report;
  Eigen::VectorXd x = pack(init);

  for (std::size_t s = 0; s < config.schedule.size(); ++s) {
    const StageSpec& spec = config.schedule[s];
    const int iters = spec.max_iters > 0 ? spec.max_iters : config.max_iters;
    Objective objective(inputs, spec.stage, spec.weights, params, init.beta);
    objective.refresh(x);

    StageReport sr;
    sr.stage = spec.stage;
    sr.initial_loss = objective.evaluate(x).total;
    if (!std::isfinite(sr.initial_loss)) {
      sr.aborted = true;
      sr.abort_reason = "initial loss is not finite";
      sr.best_loss = sr.initial_loss;
      report.stages.push_back(sr);
      report.aborted = true;
      break;
    }
    // Every term is >= 0, so a stage starting at the floor is already at its minimum.
    if (sr.initial_loss <= kDivergenceFloor) {
      sr.converged = true;
      sr.best_loss = sr.initial_loss;
      report.final_gates = objective.gates();
      report.stages.push_back(sr);
      continue;
    }
    const double limit = config.divergence_factor * std::max(sr.initial_loss, kDivergenceFloor);

    // The returned parameters are the best of the last gate epoch; stage_best is
    // only the running minimum of recorded totals.
    double stage_best = sr.initial_loss;
    Eigen::VectorXd epoch_best_x = x;
    double epoch_best = sr.initial_loss;
    double epoch_start = sr.initial_loss;
    AdamState adam(x.size());
    AdamConfig adam_config = config.adam;
    if (spec.learning_rate) adam_config.learning_rate = *spec.learning_rate;
    // Adam's first steps are ~lr in every coordinate whatever the gradient
    // size, so a near-optimal start can spike briefly; only a sustained
    // excursion counts as divergence.
    int above_limit = 0;
    bool refreshed_now = false;

    int it = 0;
    while (it < iters) {
      if (it > 0 && it % config.gate_refresh_period == 0) {
        const double decrease = epoch_start - epoch_best;
        if (decrease <= config.convergence_tol * std::max(std::abs(epoch_start), kDivergenceFloor)) {
          sr.converged = true;
          break;
        }
        x = epoch_best_x;
        objective.refresh(x);
        epoch_best = objective.evaluate(x).total;
        epoch_best_x = x;
        epoch_start = epoch_best;
        above_limit = 0;
        refreshed_now = true;
      }
      const Eigen::VectorXd g = objective.gradient(x, config.gradient_step, config.fd_mode);
      adam_step(x, adam, g, adam_config);
      ++it;
      const losses::LossBreakdown value = objective.evaluate(x);

      if (!std::isfinite(value.total) || !x.allFinite()) {
        sr.aborted = true;
        sr.abort_reason = "loss became NaN at iteration " + std::to_string(it);
        break;
      }
      above_limit = value.total > limit ? above_limit + 1 : 0;

      if (value.total < epoch_best) {
        epoch_best = value.total;
        epoch_best_x = x;
      }
      stage_best = std::min(stage_best, value.total);
      IterationRecord rec;
      rec.stage = static_cast<int>(s);
      rec.iteration = it;
      rec.total = value.total;
      rec.best = stage_best;
      rec.terms = value.terms;
      rec.gate_refresh = refreshed_now;
      refreshed_now = false;
      report.history.push_back(rec);
      if (above_limit >= config.gate_refresh_period) {
        sr.aborted = true;
        sr.abort_reason = "diverged at iteration " + std::to_string(it);
        break;
      }
    }
    if (!sr.aborted && it >= iters && it > 0) {
      const double decrease = epoch_start - epoch_best;
      sr.converged = decrease <= config.convergence_tol * std::max(std::abs(epoch_start), kDivergenceFloor);
    }
    sr.iterations = it;
    sr.best_loss = epoch_best;
    x = epoch_best_x;
    objective.refresh(x);
    report.final_gates = objective.gates();
    report.stages.push_back(sr);
    if (sr.aborted) {
      report.aborted = true;
      break;
    }
  }

  MotionSequence out = init;
  unpack(x, out);
  report.delta = parameter_delta(init, out);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------

std::string report_to_json(const OptimizationReport& report, bool include_wall_time) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["aborted"] = report.aborted;
  ordered_json stages = ordered_json::array();
  for (const StageReport& s : report.stages) {
    ordered_json o;
    o["stage"] = std::string(losses::to_string(s.stage));
    o["iterations"] = s.iterations;
    o["initial_loss"] = s.initial_loss;
    o["best_loss"] = s.best_loss;
    o["converged"] = s.converged;
    o["aborted"] = s.aborted;
    if (s.aborted) o["abort_reason"] = s.abort_reason;
    stages.push_back(o);
  }
  j["stages"] = stages;

  ordered_json gates;
  ordered_json stable;
  for (int l = 0; l < losses::kNumLimbs; ++l) {
    stable[std::string(body::to_string(static_cast<body::Group>(l)))] = report.final_gates.stable_frames[l];
  }
  gates["stable_frames"] = stable;
  gates["sliding_pairs"] = report.final_gates.sliding_pairs;
  gates["sds_active"] = report.final_gates.sds_active;
  gates["mean_visible"] = report.final_gates.mean_visible;
  gates["mean_refit_pairs"] = report.final_gates.mean_refit_pairs;
  j["final_gates"] = gates;

  j["delta"] = {{"max_translation", report.delta.max_translation},
                {"mean_translation", report.delta.mean_translation},
                {"max_rotation", report.delta.max_rotation},
                {"rms_rotation", report.delta.rms_rotation}};

  ordered_json history = ordered_json::array();
  for (const IterationRecord& r : report.history) {
    ordered_json h;
    h["stage"] = r.stage;
    h["iteration"] = r.iteration;
    h["total"] = r.total;
    h["best"] = r.best;
    ordered_json terms;
    for (int t = 0; t < losses::kNumTerms; ++t) {
      terms[std::string(losses::to_string(static_cast<Term>(t)))] = r.terms[t];
    }
    h["terms"] = terms;
    h["gate_refresh"] = r.gate_refresh;
    history.push_back(h);
  }
  j["history"] = history;
  if (include_wall_time) j["wall_time_seconds"] = report.wall_time_seconds;
  return j.dump(1) + "\n";
}

std::string report_to_csv(const OptimizationReport& report) {
  std::ostringstream out;
  out << "stage,iteration,total,best,gate_refresh";
  for (int t = 0; t < losses::kNumTerms; ++t) out << ',' << losses::to_string(static_cast<Term>(t));
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const IterationRecord& r : report.history) {
    out << r.stage << ',' << r.iteration << ',' << num(r.total) << ',' << num(r.best) << ','
        << (r.gate_refresh ? 1 : 0);
    for (double v : r.terms) out << ',' << num(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace scenefit::optimize
