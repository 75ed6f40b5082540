#include "scenefit/metrics.hpp"

#include "scenefit/geometry.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace scenefit::metrics {

namespace {

constexpr double kMm = 1000.0;

template <typename A, typename B>
void require_same_length(const A& a, const B& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": prediction has " + std::to_string(a.size()) +
                                " frames, ground truth has " + std::to_string(b.size()));
  }
}

Points flatten(const JointSequence& seq, std::size_t begin, std::size_t end) {
  Points out;
  out.reserve((end - begin) * kNumJoints);
  for (std::size_t k = begin; k < end; ++k) out.insert(out.end(), seq[k].begin(), seq[k].end());
  return out;
}

// Identical inputs align by the identity exactly; an SVD would leave rounding noise.
geometry::Similarity align(const Points& src, const Points& tgt, bool with_scale, bool allow_degenerate) {
  if (src == tgt) return {};
  return geometry::kabsch(src, tgt, with_scale, allow_degenerate);
}

double mean_error(const Points& a, const Points& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

template <int Order>
Vec3 difference(const JointSequence& s, std::size_t k, int j) {
  if constexpr (Order == 2) {
    return s[k + 2][j] - 2.0 * s[k + 1][j] + s[k][j];
  } else {
    return s[k + 3][j] - 3.0 * s[k + 2][j] + 3.0 * s[k + 1][j] - s[k][j];
  }
}

}  // namespace

double mpjpe(const JointSequence& pred, const JointSequence& gt) {
  require_same_length(pred, gt, "mpjpe");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) {
      sum += ((pred[k][j] - pred[k][0]) - (gt[k][j] - gt[k][0])).norm();
    }
  }
  return kMm * sum / static_cast<double>(pred.size() * kNumJoints);
}

double pve(const VertexSequence& pred, const VertexSequence& gt) {
  require_same_length(pred, gt, "pve");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    require_same_length(pred[k], gt[k], "pve vertices");
    for (std::size_t i = 0; i < pred[k].size(); ++i) sum += (pred[k][i] - gt[k][i]).norm();
    count += pred[k].size();
  }
  return count == 0 ? 0.0 : kMm * sum / static_cast<double>(count);
}

double pa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  require_same_length(pred, gt, "pa_mpjpe");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Points p(pred[k].begin(), pred[k].end());
    const Points g(gt[k].begin(), gt[k].end());
    sum += mean_error(align(p, g, true, false).apply(p), g);
  }
  return kMm * sum / static_cast<double>(pred.size());
}

double accel_error(const JointSequence& pred, const JointSequence& gt, double frame_rate) {
  require_same_length(pred, gt, "accel_error");
  if (pred.size() < 3) throw std::invalid_argument("accel_error needs at least 3 frames");
  double sum = 0.0;
  for (std::size_t k = 0; k + 2 < pred.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) sum += (difference<2>(pred, k, j) - difference<2>(gt, k, j)).norm();
  }
  return sum / static_cast<double>((pred.size() - 2) * kNumJoints) * frame_rate * frame_rate;
}

double jitter(const JointSequence& joints, double frame_rate) {
  if (joints.size() < 4) throw std::invalid_argument("jitter needs at least 4 frames");
  double sum = 0.0;
  for (std::size_t k = 0; k + 3 < joints.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) sum += difference<3>(joints, k, j).norm();
  }
  return sum / static_cast<double>((joints.size() - 3) * kNumJoints) * frame_rate * frame_rate * frame_rate;
}

double jitter_error(const JointSequence& pred, const JointSequence& gt, double frame_rate) {
  require_same_length(pred, gt, "jitter_error");
  if (pred.size() < 4) throw std::invalid_argument("jitter needs at least 4 frames");
  double sum = 0.0;
  for (std::size_t k = 0; k + 3 < pred.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) sum += (difference<3>(pred, k, j) - difference<3>(gt, k, j)).norm();
  }
  return sum / static_cast<double>((pred.size() - 3) * kNumJoints) * frame_rate * frame_rate * frame_rate;
}

double pck(const JointSequence& pred, const JointSequence& gt, double threshold) {
  require_same_length(pred, gt, "pck");
  if (pred.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (((pred[k][j] - pred[k][0]) - (gt[k][j] - gt[k][0])).norm() < threshold) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size() * kNumJoints);
}

std::vector<std::size_t> segment_lengths(std::size_t n_frames, std::size_t segment) {
  if (segment == 0) throw std::invalid_argument("segment length must be positive");
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < n_frames; start += segment) out.push_back(std::min(segment, n_frames - start));
  return out;
}

std::vector<SegmentResult> world_segments(const JointSequence& pred, const JointSequence& gt, std::size_t segment) {
  require_same_length(pred, gt, "world_segments");
  std::vector<SegmentResult> out;
  std::size_t start = 0;
  for (std::size_t len : segment_lengths(pred.size(), segment)) {
    SegmentResult r;
    r.start = start;
    r.length = len;
    const Points p = flatten(pred, start, start + len);
    const Points g = flatten(gt, start, start + len);
    const std::size_t head = std::min<std::size_t>(2, len);
    const Points p_head = flatten(pred, start, start + head);
    const Points g_head = flatten(gt, start, start + head);
    r.w_mpjpe = kMm * mean_error(align(p_head, g_head, false, true).apply(p), g);
    r.wa_mpjpe = kMm * mean_error(align(p, g, false, true).apply(p), g);
    out.push_back(r);
    start += len;
  }
  return out;
}

double w_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  const auto segs = world_segments(pred, gt);
  if (segs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : segs) sum += s.w_mpjpe;
  return sum / static_cast<double>(segs.size());
}

double wa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  const auto segs = world_segments(pred, gt);
  if (segs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : segs) sum += s.wa_mpjpe;
  return sum / static_cast<double>(segs.size());
}

double rte(const Points& pred_translation, const Points& gt_translation) {
  require_same_length(pred_translation, gt_translation, "rte");
  if (gt_translation.size() < 2) throw std::invalid_argument("rte needs at least 2 frames");
  double path = 0.0;
  for (std::size_t k = 1; k < gt_translation.size(); ++k) path += (gt_translation[k] - gt_translation[k - 1]).norm();
  if (!(path > 0.0)) throw DegenerateInput("rte: ground-truth trajectory has zero length");
  const geometry::Similarity a = align(pred_translation, gt_translation, false, true);
  return 100.0 * mean_error(a.apply(pred_translation), gt_translation) / path;
}

double t_error(const Points& pred_translation, const Points& gt_translation) {
  require_same_length(pred_translation, gt_translation, "t_error");
  if (pred_translation.empty()) return 0.0;
  const Vec3 shift = gt_translation[0] - pred_translation[0];
  double sum = 0.0;
  for (std::size_t k = 0; k < pred_translation.size(); ++k) {
    sum += (pred_translation[k] + shift - gt_translation[k]).norm();
  }
  return sum / static_cast<double>(pred_translation.size());
}

// ---------------------------------------------------------------------------

EvalResult evaluate(const body::BodyTemplate& tmpl, const MotionSequence& pred, const MotionSequence& gt) {
  require_same_length(pred, gt, "evaluate");
  pred.validate();
  gt.validate();
  const auto posed_pred = body::skin_all(tmpl, pred);
  const auto posed_gt = body::skin_all(tmpl, gt);
  JointSequence jp, jg;
  VertexSequence vp, vg;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    jp.push_back(posed_pred[k].joints);
    jg.push_back(posed_gt[k].joints);
    vp.push_back(posed_pred[k].vertices);
    vg.push_back(posed_gt[k].vertices);
  }
  const double fps = gt.frame_rate;

  EvalResult r;
  r.mpjpe = mpjpe(jp, jg);
  r.pa_mpjpe = pa_mpjpe(jp, jg);
  r.pve = pve(vp, vg);
  r.pck03 = pck(jp, jg);
  if (jp.size() >= 3) r.accel = accel_error(jp, jg, fps);
  if (jp.size() >= 4) {
    r.jitter = jitter_error(jp, jg, fps);
    r.pred_jitter = jitter(jp, fps);
    r.gt_jitter = jitter(jg, fps);
  }
  r.segments = world_segments(jp, jg);
  for (const auto& s : r.segments) {
    r.w_mpjpe += s.w_mpjpe;
    r.wa_mpjpe += s.wa_mpjpe;
  }
  if (!r.segments.empty()) {
    r.w_mpjpe /= static_cast<double>(r.segments.size());
    r.wa_mpjpe /= static_cast<double>(r.segments.size());
  }
  if (gt.size() >= 2) {
    try {
      r.rte = rte(pred.translation, gt.translation);
    } catch (const DegenerateInput&) {
      r.rte = 0.0;
    }
  }
  r.t_error = t_error(pred.translation, gt.translation);
  return r;
}

std::string to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["mpjpe"] = r.mpjpe;
  j["pa_mpjpe"] = r.pa_mpjpe;
  j["pve"] = r.pve;
  j["accel"] = r.accel;
  j["pck03"] = r.pck03;
  j["wa_mpjpe"] = r.wa_mpjpe;
  j["w_mpjpe"] = r.w_mpjpe;
  j["rte"] = r.rte;
  j["jitter"] = r.jitter;
  j["t_error"] = r.t_error;
  j["pred_jitter"] = r.pred_jitter;
  j["gt_jitter"] = r.gt_jitter;
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : r.segments) {
    segs.push_back({{"start", s.start}, {"length", s.length}, {"w_mpjpe", s.w_mpjpe}, {"wa_mpjpe", s.wa_mpjpe}});
  }
  j["segments"] = segs;
  j["conventions"] = {
      {"units", {{"mpjpe", "mm"}, {"pa_mpjpe", "mm"}, {"pve", "mm"}, {"accel", "m/s^2"}, {"pck03", "fraction"},
                 {"wa_mpjpe", "mm"}, {"w_mpjpe", "mm"}, {"rte", "percent"}, {"jitter", "m/s^3"},
                 {"t_error", "m"}}},
      {"mpjpe_alignment", "per-frame pelvis translation"},
      {"pa_mpjpe_alignment", "per-frame similarity procrustes"},
      {"pck_threshold_m", kPckThreshold},
      {"segment_length", kSegmentLength},
      {"w_mpjpe_alignment", "rigid, fit on the first two frames of each segment"},
      {"wa_mpjpe_alignment", "rigid, fit on the whole segment"},
      {"rte", "100 * mean |rigidly aligned pred root - gt root| / gt path length"},
      {"t_error", "mean |pred root - gt root| after matching the first frame"},
      {"jitter", "mean |third difference of pred joints - that of gt joints| * fps^3"},
  };
  return j.dump(1) + "\n";
}

std::string to_csv(const EvalResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "mpjpe,pa_mpjpe,pve,accel,pck03,wa_mpjpe,w_mpjpe,rte,jitter,t_error\n"
                "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                r.mpjpe, r.pa_mpjpe, r.pve, r.accel, r.pck03, r.wa_mpjpe, r.w_mpjpe, r.rte, r.jitter, r.t_error);
  return buf;
}

}  // namespace scenefit::metrics
