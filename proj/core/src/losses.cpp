#include "scenefit/losses.hpp"

#include "scenefit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace scenefit::losses {

namespace {

constexpr std::array<std::string_view, kNumTerms> kTermNames = {
    "ct", "sld", "trans", "joints", "m2p", "GR", "ST", "LWD", "SDS", "VLR"};

double nearest_in_subset(const Vec3& v, const Points& points, const std::vector<int>& subset) {
  double best = std::numeric_limits<double>::infinity();
  for (int idx : subset) best = std::min(best, geometry::squared_distance(v, points[idx]));
  return best;
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i);
  return out;
}

}  // namespace

std::string_view to_string(Term term) { return kTermNames[static_cast<int>(term)]; }

Term term_from_string(std::string_view name) {
  for (int i = 0; i < kNumTerms; ++i) {
    if (kTermNames[i] == name) return static_cast<Term>(i);
  }
  throw ValidationError("unknown loss term '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) { return stage == Stage::kAnnotate ? "ANNOTATE" : "POSTPROCESS"; }

Stage stage_from_string(std::string_view name) {
  if (name == "ANNOTATE") return Stage::kAnnotate;
  if (name == "POSTPROCESS") return Stage::kPostprocess;
  throw ValidationError("unknown stage '" + std::string(name) + "'");
}

bool term_in_stage(Term term, Stage stage) {
  const bool post = term == Term::kLwd || term == Term::kSds || term == Term::kVlr;
  return stage == Stage::kPostprocess ? post : !post;
}

void LossWeights::validate() const {
  for (int i = 0; i < kNumTerms; ++i) {
    if (!std::isfinite(lambda[i]) || lambda[i] < 0.0) {
      throw ValidationError("loss weight for " + std::string(kTermNames[i]) + " must be finite and >= 0");
    }
  }
}

LossWeights LossWeights::ones() {
  LossWeights w;
  w.lambda.fill(1.0);
  return w;
}

void LossParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(stable_threshold, "stable_threshold");
  positive(r_contact, "r_contact");
  positive(d_torso, "d_torso");
  positive(d_limb, "d_limb");
  positive(eps_v, "eps_v");
  if (d_limb > d_torso) throw ValidationError("d_limb must not exceed d_torso");
  for (double w : {w_torso, w_limb, part_weights.torso, part_weights.limbs, part_weights.hands,
                   part_weights.feet}) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("part weights must be finite and >= 0");
  }
  if (!std::isfinite(hpr_gamma)) throw ValidationError("hpr_gamma must be finite");
}

// ---------------------------------------------------------------------------

StabilityRecord detect_stable_limbs(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                                    const geometry::SceneIndex& scene, const LossParams& params) {
  const std::size_t n = posed.size();
  if (n < 2) throw std::invalid_argument("stability detection needs at least 2 frames");
  StabilityRecord rec;
  rec.stable.assign(n, {false, false, false, false});
  rec.environment.resize(n);
  for (std::size_t k = 1; k < n; ++k) {
    std::array<double, kNumLimbs> move{};
    for (int l = 0; l < kNumLimbs; ++l) {
      move[l] = body::movement(posed[k - 1], posed[k], tmpl.group(group_of(static_cast<Limb>(l))));
    }
    for (int l = 0; l < kNumLimbs; ++l) {
      const int sib = static_cast<int>(sibling(static_cast<Limb>(l)));
      if (!(move[l] < params.stable_threshold && move[l] < move[sib])) continue;
      const Vec3 c = body::centroid(posed[k].vertices, tmpl.group(group_of(static_cast<Limb>(l))));
      std::vector<int> env = scene.index().within_radius(c, params.r_contact);
      if (env.empty()) continue;  // nothing to touch: not treated as a contact
      rec.stable[k][l] = true;
      rec.environment[k][l] = std::move(env);
    }
  }
  return rec;
}

StabilityRecord detect_stable_limbs(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                                    const SceneMesh& scene, const LossParams& params) {
  const geometry::SceneIndex index(scene);
  return detect_stable_limbs(tmpl, body::skin_all(tmpl, motion), index, params);
}

double contact_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                    const SceneMesh& scene, const StabilityRecord& stability) {
  if (stability.size() != posed.size()) {
    throw std::invalid_argument("contact_loss: stability record length differs from motion");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < posed.size(); ++k) {
    for (int l = 0; l < kNumLimbs; ++l) {
      if (!stability.stable[k][l]) continue;
      const auto& group = tmpl.group(group_of(static_cast<Limb>(l)));
      const auto& env = stability.environment[k][l];
      if (group.empty() || env.empty()) continue;
      double limb = 0.0;
      for (int i : group) limb += std::sqrt(nearest_in_subset(posed[k].vertices[i], scene.vertices, env));
      sum += limb / static_cast<double>(group.size());
    }
  }
  return sum / static_cast<double>(posed.size());
}

double contact_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, const SceneMesh& scene,
                    const StabilityRecord& stability) {
  return contact_loss(tmpl, body::skin_all(tmpl, motion), scene, stability);
}

double sliding_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                    const StabilityRecord& stability) {
  const std::size_t n = posed.size();
  if (n < 2) throw std::invalid_argument("sliding_loss needs at least 2 frames");
  if (stability.size() != n) throw std::invalid_argument("sliding_loss: stability length differs from motion");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    for (int l = 0; l < kNumLimbs; ++l) {
      if (!stability.stable[k][l] || !stability.stable[k + 1][l]) continue;
      const auto& group = tmpl.group(group_of(static_cast<Limb>(l)));
      sum += (body::centroid(posed[k + 1].vertices, group) - body::centroid(posed[k].vertices, group)).norm();
    }
  }
  return sum / static_cast<double>(n);
}

double sliding_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                    const StabilityRecord& stability) {
  return sliding_loss(tmpl, body::skin_all(tmpl, motion), stability);
}

double trans_smooth_loss(const MotionSequence& motion, const Points& lidar_trajectory) {
  const std::size_t n = motion.size();
  if (lidar_trajectory.size() != n) {
    throw std::invalid_argument("trans_smooth_loss: LiDAR trajectory has " +
                                std::to_string(lidar_trajectory.size()) + " frames, motion has " +
                                std::to_string(n));
  }
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double lidar = (lidar_trajectory[j + 1] - lidar_trajectory[j]).norm();
    const double human = (motion.translation[j + 1] - motion.translation[j]).norm();
    sum += std::max(0.0, lidar - human);
  }
  return sum / static_cast<double>(n);
}

double joint_smooth_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed) {
  const std::size_t n = posed.size();
  if (n < 3) throw std::invalid_argument("joint_smooth_loss needs at least 3 frames");
  const auto& stable = tmpl.group(body::Group::kStableJoints);
  if (stable.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    double acc = 0.0;
    for (int s : stable) {
      acc += (posed[j + 1].joints[s] - 2.0 * posed[j].joints[s] + posed[j - 1].joints[s]).norm();
    }
    sum += acc / static_cast<double>(stable.size());
  }
  return sum / static_cast<double>(n);
}

double joint_smooth_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion) {
  return joint_smooth_loss(tmpl, body::skin_all(tmpl, motion));
}

double sds_loss(const MotionSequence& motion, double eps_v) {
  const std::size_t n = motion.size();
  if (n < 3) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const Vec3 u0 = motion.translation[j] - motion.translation[j - 1];
    const Vec3 u1 = motion.translation[j + 1] - motion.translation[j];
    const double s0 = u0.norm(), s1 = u1.norm();
    if (s0 > eps_v && s1 > eps_v) sum += 1.0 - u1.dot(u0) / (s0 * s1);
  }
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

double mesh2point_loss(const Points& vertices, const Points& human_points, const Vec3& lidar_origin,
                       double gamma) {
  if (human_points.empty()) throw std::invalid_argument("mesh2point_loss: empty human point cloud");
  const std::vector<int> visible = geometry::hpr(vertices, lidar_origin, gamma);
  if (visible.empty()) throw DegenerateInput("mesh2point_loss: no visible vertices");
  Points v;
  v.reserve(visible.size());
  for (int i : visible) v.push_back(vertices[i]);
  return geometry::chamfer(v, human_points);
}

double mesh2point_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                       const Points& human_points, const Vec3& lidar_origin, double gamma) {
  return mesh2point_loss(body::skin(tmpl, motion, k).vertices, human_points, lidar_origin, gamma);
}

double global_refit_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                         const LossParams& params, const std::vector<int>* visible) {
  if (params.d_limb > params.d_torso) throw ValidationError("global_refit_loss: d_limb must not exceed d_torso");
  if (human_points.empty()) throw std::invalid_argument("global_refit_loss: empty human point cloud");
  std::vector<signed char> part(vertices.size(), -1);
  for (int i : tmpl.group(body::Group::kTorso)) part[i] = 0;
  for (int i : tmpl.group(body::Group::kLimbs)) part[i] = 1;
  const geometry::NeighborIndex index(human_points);
  const std::vector<int> subset = visible ? *visible : all_indices(vertices.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (int i : subset) {
    if (part[i] < 0) continue;
    const double d2 = index.nearest(vertices[i]).squared_distance;
    const double d = std::sqrt(d2);
    if (part[i] == 0 && d <= params.d_torso) {
      sum += params.w_torso * d2;
      ++count;
    } else if (part[i] == 1 && d <= params.d_limb) {
      sum += params.w_limb * d2;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double global_refit_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                         const Points& human_points, const LossParams& params, const std::vector<int>* visible) {
  return global_refit_loss(tmpl, body::skin(tmpl, motion, k).vertices, human_points, params, visible);
}

double scene_touch_loss(const Points& vertices, const geometry::SceneIndex& scene) {
  if (vertices.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec3& v : vertices) {
    const double eta = scene.penetration_depth(v);
    if (eta < 0.0) sum += eta * eta;
  }
  return sum / static_cast<double>(vertices.size());
}

double scene_touch_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                        const SceneMesh& scene) {
  return scene_touch_loss(body::skin(tmpl, motion, k).vertices, geometry::SceneIndex(scene));
}

std::vector<double> vertex_part_weights(const body::BodyTemplate& tmpl, const PartWeights& weights) {
  std::vector<double> w(tmpl.num_vertices(), weights.torso);
  for (int i : tmpl.group(body::Group::kLimbs)) w[i] = weights.limbs;
  for (body::Group g : {body::Group::kLeftHand, body::Group::kRightHand}) {
    for (int i : tmpl.group(g)) w[i] = weights.hands;
  }
  for (body::Group g : {body::Group::kLeftFoot, body::Group::kRightFoot}) {
    for (int i : tmpl.group(g)) w[i] = weights.feet;
  }
  return w;
}

double lwd_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                const PartWeights& weights, const std::vector<int>* visible) {
  if (human_points.empty()) throw std::invalid_argument("lwd_loss: empty human point cloud");
  const std::vector<double> w = vertex_part_weights(tmpl, weights);
  const geometry::NeighborIndex index(human_points);
  const std::vector<int> subset = visible ? *visible : all_indices(vertices.size());
  if (subset.empty()) return 0.0;
  double sum = 0.0;
  for (int i : subset) sum += w[i] * index.nearest(vertices[i]).squared_distance;
  return sum / static_cast<double>(subset.size());
}

double lwd_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                const Points& human_points, const PartWeights& weights, const std::vector<int>* visible) {
  return lwd_loss(tmpl, body::skin(tmpl, motion, k).vertices, human_points, weights, visible);
}

double vlr_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                const std::vector<int>* visible) {
  if (human_points.empty()) throw std::invalid_argument("vlr_loss: empty human point cloud");
  std::vector<char> in_subset(vertices.size(), visible ? 0 : 1);
  if (visible) {
    for (int i : *visible) in_subset[i] = 1;
  }
  const geometry::NeighborIndex index(human_points);
  double sum = 0.0;
  std::size_t count = 0;
  for (int g = 0; g < kNumLimbs; ++g) {
    for (int i : tmpl.groups[g]) {
      if (!in_subset[i]) continue;
      sum += index.nearest(vertices[i]).squared_distance;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double vlr_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                const Points& human_points, const std::vector<int>* visible) {
  return vlr_loss(tmpl, body::skin(tmpl, motion, k).vertices, human_points, visible);
}

// ---------------------------------------------------------------------------

void SequenceInputs::check(Stage stage, std::size_t n_frames) const {
  if (!tmpl) throw ValidationError("loss inputs: missing body template");
  if (!clouds) throw ValidationError("loss inputs: missing human point clouds");
  if (clouds->size() != n_frames) {
    throw ValidationError("loss inputs: " + std::to_string(clouds->size()) + " clouds for " +
                          std::to_string(n_frames) + " motion frames");
  }
  for (std::size_t k = 0; k < clouds->size(); ++k) {
    require_same_frame((*clouds)[k].frame, Frame::kWorld, "human cloud " + std::to_string(k));
    if ((*clouds)[k].points.empty()) {
      throw ValidationError("loss inputs: human cloud " + std::to_string(k) + " is empty");
    }
  }
  if (lidar_trajectory.size() != n_frames) {
    throw ValidationError("loss inputs: LiDAR trajectory has " + std::to_string(lidar_trajectory.size()) +
                          " entries for " + std::to_string(n_frames) + " motion frames");
  }
  if (stage == Stage::kAnnotate && (!scene || scene->vertices.empty())) {
    throw ValidationError("loss inputs: ANNOTATE stage needs a scene mesh");
  }
}

namespace {

LossBreakdown evaluate(const std::array<bool, kNumTerms>& active, const MotionSequence& motion,
                       const SequenceInputs& inputs, const LossParams& params) {
  params.validate();
  const body::BodyTemplate& tmpl = *inputs.tmpl;
  const std::size_t n = motion.size();
  const auto posed = body::skin_all(tmpl, motion);
  auto on = [&](Term t) { return active[static_cast<int>(t)]; };

  LossBreakdown out;
  const bool need_scene = on(Term::kContact) || on(Term::kSliding) || on(Term::kSceneTouch);
  std::unique_ptr<geometry::SceneIndex> scene;
  if (need_scene) scene = std::make_unique<geometry::SceneIndex>(*inputs.scene);

  if ((on(Term::kContact) || on(Term::kSliding)) && n >= 2) {
    const StabilityRecord rec = detect_stable_limbs(tmpl, posed, *scene, params);
    if (on(Term::kContact)) out.terms[static_cast<int>(Term::kContact)] = contact_loss(tmpl, posed, *inputs.scene, rec);
    if (on(Term::kSliding)) out.terms[static_cast<int>(Term::kSliding)] = sliding_loss(tmpl, posed, rec);
  }
  if (on(Term::kTrans)) out.terms[static_cast<int>(Term::kTrans)] = trans_smooth_loss(motion, inputs.lidar_trajectory);
  if (on(Term::kJoints) && n >= 3) out.terms[static_cast<int>(Term::kJoints)] = joint_smooth_loss(tmpl, posed);
  if (on(Term::kSds)) out.terms[static_cast<int>(Term::kSds)] = sds_loss(motion, params.eps_v);

  const bool per_frame = on(Term::kMesh2Point) || on(Term::kGlobalRefit) || on(Term::kSceneTouch) ||
                         on(Term::kLwd) || on(Term::kVlr);
  if (per_frame) {
    std::vector<std::array<double, kNumTerms>> frame_terms(n);
    parallel_for(n, [&](std::size_t k) {
      auto& ft = frame_terms[k];
      ft.fill(0.0);
      const Points& verts = posed[k].vertices;
      const Points& cloud = (*inputs.clouds)[k].points;
      std::vector<int> visible;
      if (on(Term::kMesh2Point) || on(Term::kLwd) || on(Term::kVlr) ||
          (on(Term::kGlobalRefit) && params.gr_visible_only)) {
        visible = geometry::hpr(verts, inputs.lidar_trajectory[k], params.hpr_gamma);
      }
      if (on(Term::kMesh2Point)) {
        Points v;
        for (int i : visible) v.push_back(verts[i]);
        if (v.empty()) throw DegenerateInput("no visible vertices at frame " + std::to_string(k));
        ft[static_cast<int>(Term::kMesh2Point)] = geometry::chamfer(v, cloud);
      }
      if (on(Term::kGlobalRefit)) {
        ft[static_cast<int>(Term::kGlobalRefit)] =
            global_refit_loss(tmpl, verts, cloud, params, params.gr_visible_only ? &visible : nullptr);
      }
      if (on(Term::kSceneTouch)) ft[static_cast<int>(Term::kSceneTouch)] = scene_touch_loss(verts, *scene);
      if (on(Term::kLwd)) ft[static_cast<int>(Term::kLwd)] = lwd_loss(tmpl, verts, cloud, params.part_weights, &visible);
      if (on(Term::kVlr)) ft[static_cast<int>(Term::kVlr)] = vlr_loss(tmpl, verts, cloud, &visible);
    });
    for (Term t : {Term::kMesh2Point, Term::kGlobalRefit, Term::kSceneTouch, Term::kLwd, Term::kVlr}) {
      if (!on(t)) continue;
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += frame_terms[k][static_cast<int>(t)];
      out.terms[static_cast<int>(t)] = sum / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace

LossBreakdown total_loss(Stage stage, const LossWeights& weights, const MotionSequence& motion,
                         const SequenceInputs& inputs, const LossParams& params) {
  weights.validate();
  inputs.check(stage, motion.size());
  std::array<bool, kNumTerms> active{};
  for (int i = 0; i < kNumTerms; ++i) {
    active[i] = term_in_stage(static_cast<Term>(i), stage) && weights.lambda[i] != 0.0;
  }
  LossBreakdown out = evaluate(active, motion, inputs, params);
  for (int i = 0; i < kNumTerms; ++i) {
    if (active[i]) out.total += weights.lambda[i] * out.terms[i];
  }
  return out;
}

LossBreakdown all_terms(const MotionSequence& motion, const SequenceInputs& inputs, const LossParams& params) {
  inputs.check(Stage::kAnnotate, motion.size());
  std::array<bool, kNumTerms> active;
  active.fill(true);
  LossBreakdown out = evaluate(active, motion, inputs, params);
  for (double t : out.terms) out.total += t;
  return out;
}

}  // namespace scenefit::losses
