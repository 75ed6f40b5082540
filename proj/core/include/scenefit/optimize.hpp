#pragma once

#include "scenefit/body.hpp"
#include "scenefit/losses.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scenefit::optimize {

/// Parameters of one frame: T (3) then theta (24 x 3).
inline constexpr int kParamsPerFrame = 3 + 3 * kNumJoints;

Eigen::VectorXd pack(const MotionSequence& motion);
/// Overwrites T and theta of `motion` (which fixes N); beta and metadata are kept.
void unpack(const Eigen::VectorXd& params, MotionSequence& motion);

enum class FdMode { kForward, kCentral };

/// Finite-difference gradient of a plain function. Throws std::domain_error when
/// f is not finite at x.
Eigen::VectorXd gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                         double h = 1e-7, FdMode mode = FdMode::kForward);

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index dim = 0) : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)) {}
};

/// Bias-corrected Adam update in place. Throws std::invalid_argument on size mismatch.
void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& gradient,
               const AdamConfig& config);

/// Summary of the gates an objective was frozen with.
struct GateSnapshot {
  std::array<int, losses::kNumLimbs> stable_frames{};  // frames each limb is stable
  int sliding_pairs = 0;
  int sds_active = 0;
  double mean_visible = 0.0;       // HPR-visible vertices per frame
  double mean_refit_pairs = 0.0;   // L_GR contributing vertices per frame
};

/// Sequence objective with frozen gates: stability, visible sets, nearest
/// neighbour / ICP correspondences and SDS speed gates are computed by
/// refresh() and held fixed until the next refresh, so the objective is a
/// smooth function of the parameters in between.
class Objective {
 public:
  Objective(const losses::SequenceInputs& inputs, losses::Stage stage, const losses::LossWeights& weights,
            const losses::LossParams& params, const Shape& beta);
  ~Objective();
  Objective(const Objective&) = delete;
  Objective& operator=(const Objective&) = delete;

  std::size_t num_frames() const;
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(num_frames()) * kParamsPerFrame; }

  /// Recomputes every gate at `params`.
  void refresh(const Eigen::VectorXd& params);
  bool refreshed() const;
  const GateSnapshot& gates() const;

  losses::LossBreakdown evaluate(const Eigen::VectorXd& params) const;

  /// Finite-difference gradient of evaluate().total. Each coordinate is
  /// evaluated locally: only the perturbed frame's per-frame terms and the
  /// temporal terms whose stencil contains that frame are recomputed.
  Eigen::VectorXd gradient(const Eigen::VectorXd& params, double h, FdMode mode) const;

  /// Loss contributions that change when frame k's parameters change
  /// (weighted sum). Exposed for stencil tests.
  double local_value(const Eigen::VectorXd& params, std::size_t k) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StageSpec {
  losses::Stage stage = losses::Stage::kAnnotate;
  losses::LossWeights weights;
  int max_iters = 0;
  std::optional<double> learning_rate;  // overrides AdamConfig::learning_rate for this stage
};

inline constexpr double kDivergenceFloor = 1e-9;

struct OptimizerConfig {
  AdamConfig adam;
  int max_iters = 300;              // default per-stage budget when a stage omits it
  double gradient_step = 1e-7;
  FdMode fd_mode = FdMode::kForward;
  int gate_refresh_period = 25;
  double convergence_tol = 1e-6;    // relative decrease of the best loss over one gate epoch
  // Abort when the loss stays above factor * max(initial, kDivergenceFloor)
  // for a whole gate epoch; NaN aborts at once.
  double divergence_factor = 10.0;
  std::vector<StageSpec> schedule;

  void validate() const;
  static losses::LossWeights default_weights(losses::Stage stage);
  static std::optional<double> default_learning_rate(losses::Stage stage);
  static OptimizerConfig defaults();
};

struct IterationRecord {
  int stage = 0;
  int iteration = 0;
  double total = 0.0;
  double best = 0.0;  // best total recorded so far in this stage
  std::array<double, losses::kNumTerms> terms{};
  bool gate_refresh = false;  // gates were refreshed before this iteration
};

struct StageReport {
  losses::Stage stage = losses::Stage::kAnnotate;
  int iterations = 0;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
};

struct ParameterDelta {
  double max_translation = 0.0;   // m
  double mean_translation = 0.0;  // m
  double max_rotation = 0.0;      // rad, per joint axis-angle difference
  double rms_rotation = 0.0;
};

struct OptimizationReport {
  std::vector<IterationRecord> history;
  std::vector<StageReport> stages;
  GateSnapshot final_gates;
  ParameterDelta delta;
  bool aborted = false;
  double wall_time_seconds = 0.0;
};

/// Runs the stage schedule from `init` and returns the best parameters found
/// (beta is never changed). Aborted stages keep their best-so-far parameters and
/// stop the schedule; the report says why.
std::pair<MotionSequence, OptimizationReport> refine_sequence(const MotionSequence& init,
                                                              const losses::SequenceInputs& inputs,
                                                              const losses::LossParams& params,
                                                              const OptimizerConfig& config);

/// JSON loss curves and summary. Wall time is left out unless asked for so that
/// reports are byte-reproducible.
std::string report_to_json(const OptimizationReport& report, bool include_wall_time = false);
std::string report_to_csv(const OptimizationReport& report);

}  // namespace scenefit::optimize
