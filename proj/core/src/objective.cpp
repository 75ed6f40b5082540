#include "scenefit/optimize.hpp"
#include "scenefit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scenefit::optimize {

using losses::Limb;
using losses::Stage;
using losses::Term;

Eigen::VectorXd pack(const MotionSequence& motion) {
  const auto n = static_cast<Eigen::Index>(motion.size());
  Eigen::VectorXd x(n * kParamsPerFrame);
  for (Eigen::Index k = 0; k < n; ++k) {
    x.segment<3>(k * kParamsPerFrame) = motion.translation[k];
    for (int j = 0; j < kNumJoints; ++j) x.segment<3>(k * kParamsPerFrame + 3 + 3 * j) = motion.pose[k][j];
  }
  return x;
}

void unpack(const Eigen::VectorXd& params, MotionSequence& motion) {
  if (params.size() % kParamsPerFrame != 0) {
    throw std::invalid_argument("unpack: parameter vector length is not a multiple of 75");
  }
  const auto n = params.size() / kParamsPerFrame;
  motion.translation.resize(static_cast<std::size_t>(n));
  motion.pose.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    motion.translation[k] = params.segment<3>(k * kParamsPerFrame);
    for (int j = 0; j < kNumJoints; ++j) motion.pose[k][j] = params.segment<3>(k * kParamsPerFrame + 3 + 3 * j);
  }
}

namespace {

enum class Kind : unsigned char { kSquared, kDistance, kPenetration };

struct VertexTerm {
  int vertex;
  Kind kind;
  int term;
  double coef;   // contribution to the unweighted term value
  double wcoef;  // lambda * coef
  Vec3 target;
  Vec3 normal;
};

inline double phi(const VertexTerm& t, const Vec3& v) {
  switch (t.kind) {
    case Kind::kSquared:
      return geometry::squared_distance(v, t.target);
    case Kind::kDistance:
      return std::sqrt(geometry::squared_distance(v, t.target));
    case Kind::kPenetration: {
      const double eta = (v - t.target).dot(t.normal);
      return eta < 0.0 ? eta * eta : 0.0;
    }
  }
  return 0.0;
}

struct FrameState {
  Vec3 translation;
  std::array<Mat3, kNumJoints> local;
  std::array<Mat3, kNumJoints> world;
  std::array<Vec3, kNumJoints> joints;
  std::array<Vec3, kNumJoints> offsets;  // joints - world * rest
  Points vertices;
  std::array<Vec3, losses::kNumLimbs> centroids;
};

struct Temporal {
  Vec3 translation;
  std::array<Vec3, losses::kNumLimbs> centroids;
  std::vector<Vec3> stable_joints;
};

}  // namespace

struct Objective::Impl {
  losses::SequenceInputs inputs;
  Stage stage;
  losses::LossWeights weights;
  losses::LossParams params;
  body::BodyModel model;
  std::size_t n = 0;
  std::size_t nv = 0;
  std::array<double, losses::kNumTerms> lambda{};
  std::vector<geometry::NeighborIndex> clouds;
  std::unique_ptr<geometry::SceneIndex> scene;

  std::array<std::vector<int>, kNumJoints> affected;            // vertices moved by theta_j
  std::array<std::array<bool, kNumJoints>, kNumJoints> subtree{};  // subtree[j][d]: d under j (inclusive)
  std::vector<int> stable_joint_ids;

  bool refreshed = false;
  std::vector<std::vector<VertexTerm>> terms;  // per frame, sorted by vertex
  std::vector<std::vector<int>> offsets;       // CSR offsets, size nv + 1
  std::vector<std::array<bool, losses::kNumLimbs>> sld_pair;  // limb stable at k and k + 1
  std::vector<char> sds_active;                // indexed by center frame j
  GateSnapshot snapshot;

  Impl(const losses::SequenceInputs& in, Stage st, const losses::LossWeights& w, const losses::LossParams& p,
       const Shape& beta)
      : inputs(in), stage(st), weights(w), params(p), model(*in.tmpl, beta) {}

  bool on(Term t) const { return lambda[static_cast<int>(t)] != 0.0; }

  // -------------------------------------------------------------------------
  // Posing

  void pose_frame(const Eigen::VectorXd& x, std::size_t k, FrameState& s) const {
    const auto& rest = model.rest_joints();
    const auto& parents = model.body_template().parents;
    const Eigen::Index base = static_cast<Eigen::Index>(k) * kParamsPerFrame;
    s.translation = x.segment<3>(base);
    for (int j = 0; j < kNumJoints; ++j) s.local[j] = rotation_from_axis_angle(x.segment<3>(base + 3 + 3 * j));
    s.world[0] = s.local[0];
    s.joints[0] = rest[0] + s.translation;
    for (int j = 1; j < kNumJoints; ++j) {
      const int p = parents[j];
      s.world[j] = s.world[p] * s.local[j];
      s.joints[j] = s.world[p] * (rest[j] - rest[p]) + s.joints[p];
    }
    for (int j = 0; j < kNumJoints; ++j) s.offsets[j] = s.joints[j] - s.world[j] * rest[j];
    s.vertices.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) s.vertices[i] = skin_vertex(s, i);
    update_centroids(s.vertices, s.centroids);
  }

  Vec3 skin_vertex(const FrameState& s, std::size_t i) const {
    const auto& w = model.weights_of(i);
    const Vec3& p = model.shaped_vertices()[i];
    if (w.size() == 1) return s.world[w[0].first] * p + s.offsets[w[0].first];
    Vec3 acc = Vec3::Zero();
    for (const auto& [j, wj] : w) acc += wj * (s.world[j] * p + s.offsets[j]);
    return acc;
  }

  void update_centroids(const Points& vertices, std::array<Vec3, losses::kNumLimbs>& c) const {
    for (int l = 0; l < losses::kNumLimbs; ++l) {
      c[l] = body::centroid(vertices, model.body_template().groups[l]);
    }
  }

  std::vector<FrameState> pose_all(const Eigen::VectorXd& x) const {
    if (x.size() != static_cast<Eigen::Index>(n * kParamsPerFrame)) {
      throw std::invalid_argument("objective: parameter vector has wrong length");
    }
    std::vector<FrameState> states(n);
    parallel_for(n, [&](std::size_t k) { pose_frame(x, k, states[k]); });
    return states;
  }

  Temporal temporal_of(const FrameState& s) const {
    Temporal t;
    t.translation = s.translation;
    t.centroids = s.centroids;
    for (int j : stable_joint_ids) t.stable_joints.push_back(s.joints[j]);
    return t;
  }

  // -------------------------------------------------------------------------
  // Temporal terms. Each returns the weighted value of the term anchored at
  // index j, reading frame quantities through `at`.

  template <typename At>
  double trans_term(std::size_t j, const At& at) const {  // pair (j, j + 1)
    const double lidar = (inputs.lidar_trajectory[j + 1] - inputs.lidar_trajectory[j]).norm();
    const double human = (at(j + 1).translation - at(j).translation).norm();
    return std::max(0.0, lidar - human) / static_cast<double>(n);
  }

  template <typename At>
  double joints_term(std::size_t j, const At& at) const {  // center j
    if (stable_joint_ids.empty()) return 0.0;
    const Temporal& a = at(j - 1);
    const Temporal& b = at(j);
    const Temporal& c = at(j + 1);
    double acc = 0.0;
    for (std::size_t s = 0; s < stable_joint_ids.size(); ++s) {
      acc += (c.stable_joints[s] - 2.0 * b.stable_joints[s] + a.stable_joints[s]).norm();
    }
    return acc / static_cast<double>(stable_joint_ids.size()) / static_cast<double>(n);
  }

  template <typename At>
  double sliding_term(std::size_t j, const At& at) const {  // pair (j, j + 1)
    double acc = 0.0;
    for (int l = 0; l < losses::kNumLimbs; ++l) {
      if (sld_pair[j][l]) acc += (at(j + 1).centroids[l] - at(j).centroids[l]).norm();
    }
    return acc / static_cast<double>(n);
  }

  template <typename At>
  double sds_term(std::size_t j, const At& at) const {  // center j
    if (!sds_active[j]) return 0.0;
    const Vec3 u0 = at(j).translation - at(j - 1).translation;
    const Vec3 u1 = at(j + 1).translation - at(j).translation;
    const double s0 = u0.norm(), s1 = u1.norm();
    if (s0 == 0.0 || s1 == 0.0) return 1.0 / static_cast<double>(n);
    return (1.0 - u1.dot(u0) / (s0 * s1)) / static_cast<double>(n);
  }

  /// Weighted temporal terms whose stencil contains frame k.
  template <typename At>
  long double temporal_local(std::size_t k, const At& at) const {
    long double sum = 0.0L;
    const std::size_t lo = k == 0 ? 0 : k - 1;
    if (on(Term::kTrans)) {
      for (std::size_t j = lo; j <= k && j + 1 < n; ++j) sum += lambda[static_cast<int>(Term::kTrans)] * trans_term(j, at);
    }
    if (on(Term::kSliding)) {
      for (std::size_t j = lo; j <= k && j + 1 < n; ++j) {
        sum += lambda[static_cast<int>(Term::kSliding)] * sliding_term(j, at);
      }
    }
    if (on(Term::kJoints) || on(Term::kSds)) {
      for (std::size_t j = std::max<std::size_t>(lo, 1); j <= k + 1 && j + 1 < n; ++j) {
        if (on(Term::kJoints)) sum += lambda[static_cast<int>(Term::kJoints)] * joints_term(j, at);
        if (on(Term::kSds)) sum += lambda[static_cast<int>(Term::kSds)] * sds_term(j, at);
      }
    }
    return sum;
  }

  // -------------------------------------------------------------------------
  // Gates

  void refresh(const Eigen::VectorXd& x) {
    const std::vector<FrameState> states = pose_all(x);
    const body::BodyTemplate& tmpl = model.body_template();
    const double inv_n = 1.0 / static_cast<double>(n);

    losses::StabilityRecord stability;
    if ((on(Term::kContact) || on(Term::kSliding)) && n >= 2) {
      std::vector<body::PosedBody> posed(n);
      for (std::size_t k = 0; k < n; ++k) {
        posed[k].vertices = states[k].vertices;
        posed[k].joints = states[k].joints;
        posed[k].frame_index = k;
      }
      stability = losses::detect_stable_limbs(tmpl, posed, *scene, params);
    } else {
      stability.stable.assign(n, {false, false, false, false});
      stability.environment.resize(n);
    }

    sld_pair.assign(n, {false, false, false, false});
    for (std::size_t k = 0; k + 1 < n; ++k) {
      for (int l = 0; l < losses::kNumLimbs; ++l) sld_pair[k][l] = stability.stable[k][l] && stability.stable[k + 1][l];
    }
    sds_active.assign(n, 0);
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const double s0 = (states[j].translation - states[j - 1].translation).norm();
      const double s1 = (states[j + 1].translation - states[j].translation).norm();
      sds_active[j] = s0 > params.eps_v && s1 > params.eps_v;
    }

    const std::vector<double> part_w = losses::vertex_part_weights(tmpl, params.part_weights);
    std::vector<signed char> part(nv, -1);
    for (int i : tmpl.group(body::Group::kTorso)) part[i] = 0;
    for (int i : tmpl.group(body::Group::kLimbs)) part[i] = 1;
    std::vector<char> end_effector(nv, 0);
    for (int l = 0; l < losses::kNumLimbs; ++l) {
      for (int i : tmpl.groups[l]) end_effector[i] = 1;
    }

    terms.assign(n, {});
    offsets.assign(n, {});
    std::vector<int> visible_count(n, 0), refit_count(n, 0);
    parallel_for(n, [&](std::size_t k) {
      const Points& verts = states[k].vertices;
      const geometry::NeighborIndex& cloud = clouds[k];
      const Points& cloud_pts = cloud.points();
      std::vector<VertexTerm>& out = terms[k];
      auto add = [&](int vertex, Kind kind, Term term, double coef, const Vec3& target,
                     const Vec3& normal = Vec3::Zero()) {
        out.push_back({vertex, kind, static_cast<int>(term), coef, lambda[static_cast<int>(term)] * coef, target,
                       normal});
      };

      std::vector<int> visible;
      if (on(Term::kMesh2Point) || on(Term::kLwd) || on(Term::kVlr) ||
          (on(Term::kGlobalRefit) && params.gr_visible_only)) {
        visible = geometry::hpr(verts, inputs.lidar_trajectory[k], params.hpr_gamma);
        if (visible.empty()) throw DegenerateInput("no visible vertices at frame " + std::to_string(k));
      }
      visible_count[k] = static_cast<int>(visible.size());

      if (on(Term::kMesh2Point)) {
        Points vis_pts;
        for (int i : visible) vis_pts.push_back(verts[i]);
        geometry::Similarity g;
        if (params.m2p_register && vis_pts.size() >= 3 && cloud.size() >= 3) {
          g = geometry::icp(vis_pts, cloud, params.icp).transform;
        }
        const Points moved = g.apply(vis_pts);
        const double fwd = inv_n / static_cast<double>(visible.size());
        for (std::size_t a = 0; a < visible.size(); ++a) {
          add(visible[a], Kind::kSquared, Term::kMesh2Point, fwd, cloud_pts[cloud.nearest(moved[a]).index]);
        }
        const geometry::NeighborIndex moved_index(moved);
        const double bwd = inv_n / static_cast<double>(cloud_pts.size());
        for (const Vec3& p : cloud_pts) {
          add(visible[moved_index.nearest(p).index], Kind::kSquared, Term::kMesh2Point, bwd, p);
        }
      }

      if (on(Term::kGlobalRefit)) {
        std::vector<std::pair<int, int>> pairs;  // vertex, point
        std::vector<double> wts;
        auto consider = [&](int i) {
          if (part[i] < 0) return;
          const auto hit = cloud.nearest(verts[i]);
          const double d = std::sqrt(hit.squared_distance);
          if (part[i] == 0 && d <= params.d_torso) {
            pairs.emplace_back(i, hit.index);
            wts.push_back(params.w_torso);
          } else if (part[i] == 1 && d <= params.d_limb) {
            pairs.emplace_back(i, hit.index);
            wts.push_back(params.w_limb);
          }
        };
        if (params.gr_visible_only) {
          for (int i : visible) consider(i);
        } else {
          for (std::size_t i = 0; i < nv; ++i) consider(static_cast<int>(i));
        }
        refit_count[k] = static_cast<int>(pairs.size());
        for (std::size_t a = 0; a < pairs.size(); ++a) {
          add(pairs[a].first, Kind::kSquared, Term::kGlobalRefit,
              inv_n * wts[a] / static_cast<double>(pairs.size()), cloud_pts[pairs[a].second]);
        }
      }

      if (on(Term::kSceneTouch)) {
        const SceneMesh& mesh = scene->mesh();
        const double coef = inv_n / static_cast<double>(nv);
        for (std::size_t i = 0; i < nv; ++i) {
          const int q = scene->index().nearest(verts[i]).index;
          add(static_cast<int>(i), Kind::kPenetration, Term::kSceneTouch, coef, mesh.vertices[q], mesh.normals[q]);
        }
      }

      if (on(Term::kContact)) {
        const Points& sv = inputs.scene->vertices;
        for (int l = 0; l < losses::kNumLimbs; ++l) {
          if (!stability.stable[k][l]) continue;
          const auto& group = tmpl.groups[l];
          const auto& env = stability.environment[k][l];
          const double coef = inv_n / static_cast<double>(group.size());
          for (int i : group) {
            int best = env.front();
            double best_d2 = geometry::squared_distance(verts[i], sv[best]);
            for (int e : env) {
              const double d2 = geometry::squared_distance(verts[i], sv[e]);
              if (d2 < best_d2) {
                best_d2 = d2;
                best = e;
              }
            }
            add(i, Kind::kDistance, Term::kContact, coef, sv[best]);
          }
        }
      }

      if (on(Term::kLwd) && !visible.empty()) {
        const double coef = inv_n / static_cast<double>(visible.size());
        for (int i : visible) {
          add(i, Kind::kSquared, Term::kLwd, coef * part_w[i], cloud_pts[cloud.nearest(verts[i]).index]);
        }
      }

      if (on(Term::kVlr)) {
        std::vector<int> ends;
        for (int i : visible) {
          if (end_effector[i]) ends.push_back(i);
        }
        // Same ordering as the direct loss is not needed: the sum is order-free
        // up to rounding and the frozen objective is its own reference.
        if (!ends.empty()) {
          const double coef = inv_n / static_cast<double>(ends.size());
          for (int i : ends) add(i, Kind::kSquared, Term::kVlr, coef, cloud_pts[cloud.nearest(verts[i]).index]);
        }
      }

      std::stable_sort(out.begin(), out.end(),
                       [](const VertexTerm& a, const VertexTerm& b) { return a.vertex < b.vertex; });
      std::vector<int>& off = offsets[k];
      off.assign(nv + 1, 0);
      for (const VertexTerm& t : out) ++off[t.vertex + 1];
      for (std::size_t i = 0; i < nv; ++i) off[i + 1] += off[i];
    });

    snapshot = GateSnapshot{};
    for (std::size_t k = 0; k < n; ++k) {
      for (int l = 0; l < losses::kNumLimbs; ++l) snapshot.stable_frames[l] += stability.stable[k][l] ? 1 : 0;
      for (int l = 0; l < losses::kNumLimbs; ++l) snapshot.sliding_pairs += sld_pair[k][l] ? 1 : 0;
      snapshot.sds_active += sds_active[k] ? 1 : 0;
      snapshot.mean_visible += visible_count[k];
      snapshot.mean_refit_pairs += refit_count[k];
    }
    snapshot.mean_visible /= static_cast<double>(n);
    snapshot.mean_refit_pairs /= static_cast<double>(n);
    refreshed = true;
  }

  void require_refreshed() const {
    if (!refreshed) throw std::logic_error("objective used before refresh()");
  }

  /// Weighted per-vertex cost of frame k at position v.
  long double vertex_cost(std::size_t k, std::size_t i, const Vec3& v) const {
    long double sum = 0.0L;
    const auto& t = terms[k];
    for (int a = offsets[k][i]; a < offsets[k][i + 1]; ++a) sum += t[a].wcoef * phi(t[a], v);
    return sum;
  }
};

// ---------------------------------------------------------------------------

Objective::Objective(const losses::SequenceInputs& inputs, Stage stage, const losses::LossWeights& weights,
                     const losses::LossParams& params, const Shape& beta) {
  if (!inputs.tmpl) throw ValidationError("objective: missing body template");
  const std::size_t n = inputs.lidar_trajectory.size();
  inputs.check(stage, n);
  weights.validate();
  params.validate();
  impl_ = std::make_unique<Impl>(inputs, stage, weights, params, beta);
  Impl& m = *impl_;
  m.n = n;
  m.nv = inputs.tmpl->num_vertices();
  for (int t = 0; t < losses::kNumTerms; ++t) {
    m.lambda[t] = losses::term_in_stage(static_cast<Term>(t), stage) ? weights.lambda[t] : 0.0;
  }
  if (m.on(Term::kJoints) && n < 3) m.lambda[static_cast<int>(Term::kJoints)] = 0.0;
  m.clouds.reserve(n);
  for (const PointCloudFrame& c : *inputs.clouds) m.clouds.emplace_back(c.points);
  if (stage == Stage::kAnnotate) m.scene = std::make_unique<geometry::SceneIndex>(*inputs.scene);

  const auto& parents = inputs.tmpl->parents;
  for (int j = 0; j < kNumJoints; ++j) {
    for (int d = 0; d < kNumJoints; ++d) {
      int a = d;
      while (a >= 0 && a != j) a = parents[a];
      m.subtree[j][d] = a == j;
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    for (std::size_t i = 0; i < m.nv; ++i) {
      for (const auto& [jt, w] : m.model.weights_of(i)) {
        if (m.subtree[j][jt]) {
          m.affected[j].push_back(static_cast<int>(i));
          break;
        }
      }
    }
  }
  m.stable_joint_ids = inputs.tmpl->group(body::Group::kStableJoints);
}

Objective::~Objective() = default;

std::size_t Objective::num_frames() const { return impl_->n; }
void Objective::refresh(const Eigen::VectorXd& params) { impl_->refresh(params); }
bool Objective::refreshed() const { return impl_->refreshed; }
const GateSnapshot& Objective::gates() const { return impl_->snapshot; }

losses::LossBreakdown Objective::evaluate(const Eigen::VectorXd& params) const {
  const Impl& m = *impl_;
  m.require_refreshed();
  const std::vector<FrameState> states = m.pose_all(params);

  std::vector<std::array<long double, losses::kNumTerms>> frame_terms(m.n);
  parallel_for(m.n, [&](std::size_t k) {
    auto& ft = frame_terms[k];
    ft.fill(0.0L);
    for (const VertexTerm& t : m.terms[k]) ft[t.term] += t.coef * phi(t, states[k].vertices[t.vertex]);
  });
  std::array<long double, losses::kNumTerms> sums{};
  for (std::size_t k = 0; k < m.n; ++k) {
    for (int t = 0; t < losses::kNumTerms; ++t) sums[t] += frame_terms[k][t];
  }

  std::vector<Temporal> temporal(m.n);
  for (std::size_t k = 0; k < m.n; ++k) temporal[k] = m.temporal_of(states[k]);
  auto at = [&](std::size_t k) -> const Temporal& { return temporal[k]; };
  for (std::size_t j = 0; j + 1 < m.n; ++j) {
    if (m.on(Term::kTrans)) sums[static_cast<int>(Term::kTrans)] += m.trans_term(j, at);
    if (m.on(Term::kSliding)) sums[static_cast<int>(Term::kSliding)] += m.sliding_term(j, at);
    if (j >= 1) {
      if (m.on(Term::kJoints)) sums[static_cast<int>(Term::kJoints)] += m.joints_term(j, at);
      if (m.on(Term::kSds)) sums[static_cast<int>(Term::kSds)] += m.sds_term(j, at);
    }
  }

  losses::LossBreakdown out;
  long double total = 0.0L;
  for (int t = 0; t < losses::kNumTerms; ++t) {
    if (m.lambda[t] == 0.0) continue;
    out.terms[t] = static_cast<double>(sums[t]);
    total += m.lambda[t] * sums[t];
  }
  out.total = static_cast<double>(total);
  return out;
}

double Objective::local_value(const Eigen::VectorXd& params, std::size_t k) const {
  const Impl& m = *impl_;
  m.require_refreshed();
  const std::vector<FrameState> states = m.pose_all(params);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < m.nv; ++i) sum += m.vertex_cost(k, i, states[k].vertices[i]);
  std::vector<Temporal> temporal(m.n);
  for (std::size_t f = 0; f < m.n; ++f) temporal[f] = m.temporal_of(states[f]);
  sum += m.temporal_local(k, [&](std::size_t f) -> const Temporal& { return temporal[f]; });
  return static_cast<double>(sum);
}

Eigen::VectorXd Objective::gradient(const Eigen::VectorXd& params, double h, FdMode mode) const {
  const Impl& m = *impl_;
  m.require_refreshed();
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("gradient: step must be positive");
  const std::vector<FrameState> states = m.pose_all(params);
  std::vector<Temporal> temporal(m.n);
  for (std::size_t k = 0; k < m.n; ++k) temporal[k] = m.temporal_of(states[k]);

  const auto& rest = m.model.rest_joints();
  const auto& parents = m.model.body_template().parents;
  std::vector<int> all(m.nv);
  for (std::size_t i = 0; i < m.nv; ++i) all[i] = static_cast<int>(i);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  parallel_for(m.n, [&](std::size_t k) {
    const FrameState& base = states[k];
    std::vector<long double> base_cost(m.nv);
    for (std::size_t i = 0; i < m.nv; ++i) base_cost[i] = m.vertex_cost(k, i, base.vertices[i]);
    auto base_at = [&](std::size_t f) -> const Temporal& { return temporal[f]; };
    const long double base_temporal = m.temporal_local(k, base_at);

    FrameState s = base;
    Temporal t_new = temporal[k];
    const Eigen::Index off = static_cast<Eigen::Index>(k) * kParamsPerFrame;

    auto delta = [&](int c, double step) -> long double {
      const std::vector<int>* verts = &all;
      if (c < 3) {
        s.translation[c] += step;
        for (int j = 0; j < kNumJoints; ++j) {
          s.joints[j][c] += step;
          s.offsets[j][c] += step;
        }
      } else {
        const int j = (c - 3) / 3;
        Vec3 aa = params.segment<3>(off + 3 + 3 * j);
        aa[(c - 3) % 3] += step;
        s.local[j] = rotation_from_axis_angle(aa);
        for (int d = j; d < kNumJoints; ++d) {
          if (!m.subtree[j][d]) continue;
          const int p = parents[d];
          s.world[d] = p < 0 ? s.local[d] : Mat3(s.world[p] * s.local[d]);
          if (d != j) s.joints[d] = s.world[p] * (rest[d] - rest[p]) + s.joints[p];
          s.offsets[d] = s.joints[d] - s.world[d] * rest[d];
        }
        verts = &m.affected[j];
      }
      long double d_sum = 0.0L;
      for (int i : *verts) {
        s.vertices[i] = m.skin_vertex(s, i);
        d_sum += m.vertex_cost(k, i, s.vertices[i]) - base_cost[i];
      }
      m.update_centroids(s.vertices, t_new.centroids);
      t_new.translation = s.translation;
      for (std::size_t a = 0; a < m.stable_joint_ids.size(); ++a) t_new.stable_joints[a] = s.joints[m.stable_joint_ids[a]];
      auto at = [&](std::size_t f) -> const Temporal& { return f == k ? t_new : temporal[f]; };
      d_sum += m.temporal_local(k, at) - base_temporal;

      // Restore the frame to its base state.
      if (c < 3) {
        s.translation = base.translation;
        s.joints = base.joints;
        s.offsets = base.offsets;
      } else {
        const int j = (c - 3) / 3;
        s.local[j] = base.local[j];
        for (int d = j; d < kNumJoints; ++d) {
          if (!m.subtree[j][d]) continue;
          s.world[d] = base.world[d];
          s.joints[d] = base.joints[d];
          s.offsets[d] = base.offsets[d];
        }
      }
      for (int i : *verts) s.vertices[i] = base.vertices[i];
      return d_sum;
    };

    for (int c = 0; c < kParamsPerFrame; ++c) {
      const long double plus = delta(c, h);
      if (mode == FdMode::kForward) {
        grad[off + c] = static_cast<double>(plus / h);
      } else {
        const long double minus = delta(c, -h);
        grad[off + c] = static_cast<double>((plus - minus) / (2.0L * h));
      }
    }
  });
  if (!grad.allFinite()) throw std::domain_error("gradient: objective is not finite");
  return grad;
}

}  // namespace scenefit::optimize
