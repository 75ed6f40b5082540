#pragma once

#include "scenefit/body.hpp"
#include "scenefit/core.hpp"

#include <array>
#include <string>
#include <vector>

namespace scenefit::metrics {

/// World joint positions per frame.
using JointSequence = std::vector<std::array<Vec3, kNumJoints>>;
/// World vertex positions per frame.
using VertexSequence = std::vector<Points>;

inline constexpr std::size_t kSegmentLength = 100;
inline constexpr double kPckThreshold = 0.3;  // meters

/// Mean joint error after per-frame pelvis alignment, mm.
double mpjpe(const JointSequence& pred, const JointSequence& gt);
/// Mean vertex error without alignment, mm.
double pve(const VertexSequence& pred, const VertexSequence& gt);
/// Mean joint error after a per-frame similarity Procrustes fit, mm.
double pa_mpjpe(const JointSequence& pred, const JointSequence& gt);
/// Mean norm of the difference of second differences, m/s^2. N >= 3.
double accel_error(const JointSequence& pred, const JointSequence& gt, double frame_rate);
/// Mean norm of the third difference of `joints`, m/s^3. N >= 4.
double jitter(const JointSequence& joints, double frame_rate);
/// Mean norm of the difference of third differences, m/s^3. N >= 4.
double jitter_error(const JointSequence& pred, const JointSequence& gt, double frame_rate);
/// Fraction of pelvis-aligned joints with error < threshold (meters).
double pck(const JointSequence& pred, const JointSequence& gt, double threshold = kPckThreshold);

/// Lengths of consecutive segments; the last one may be shorter.
std::vector<std::size_t> segment_lengths(std::size_t n_frames, std::size_t segment = kSegmentLength);

struct SegmentResult {
  std::size_t start = 0;
  std::size_t length = 0;
  double w_mpjpe = 0.0;   // mm, rigid fit on the first two frames
  double wa_mpjpe = 0.0;  // mm, rigid fit on the whole segment
};

std::vector<SegmentResult> world_segments(const JointSequence& pred, const JointSequence& gt,
                                          std::size_t segment = kSegmentLength);
double w_mpjpe(const JointSequence& pred, const JointSequence& gt);
double wa_mpjpe(const JointSequence& pred, const JointSequence& gt);

/// Mean error of the rigidly aligned root trajectory over the ground-truth path
/// length, in percent. Throws DegenerateInput when the ground truth does not move.
double rte(const Points& pred_translation, const Points& gt_translation);
/// Mean root error after translating pred so that the first frames coincide, m.
double t_error(const Points& pred_translation, const Points& gt_translation);

struct EvalResult {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double pve = 0.0;
  double accel = 0.0;
  double pck03 = 0.0;
  double wa_mpjpe = 0.0;
  double w_mpjpe = 0.0;
  double rte = 0.0;
  double jitter = 0.0;   // jitter error against the ground truth
  double t_error = 0.0;
  std::vector<SegmentResult> segments;
  /// Absolute third-difference smoothness of each sequence (not an error).
  double pred_jitter = 0.0;
  double gt_jitter = 0.0;
};

/// Poses both motions with `tmpl` (each with its own beta) and computes every
/// metric. Throws std::invalid_argument on length mismatch. Metrics that need
/// more frames than available are left at 0; RTE is 0 when the ground truth is static.
EvalResult evaluate(const body::BodyTemplate& tmpl, const MotionSequence& pred, const MotionSequence& gt);

/// Result plus the conventions used, as pretty JSON.
std::string to_json(const EvalResult& result);
std::string to_csv(const EvalResult& result);

}  // namespace scenefit::metrics
