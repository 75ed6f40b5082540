#pragma once

#include "scenefit/body.hpp"
#include "scenefit/core.hpp"
#include "scenefit/geometry.hpp"

#include <array>
#include <string_view>
#include <vector>

namespace scenefit::losses {

/// The four contact limbs, in the same order as the first four body groups.
enum class Limb : int { kLeftFoot = 0, kRightFoot, kLeftHand, kRightHand };
inline constexpr int kNumLimbs = 4;

inline body::Group group_of(Limb limb) { return static_cast<body::Group>(static_cast<int>(limb)); }
/// The other limb of the same kind (left foot <-> right foot, left hand <-> right hand).
inline Limb sibling(Limb limb) { return static_cast<Limb>(static_cast<int>(limb) ^ 1); }
inline bool is_foot(Limb limb) { return static_cast<int>(limb) < 2; }

enum class Term : int {
  kContact = 0,
  kSliding,
  kTrans,
  kJoints,
  kMesh2Point,
  kGlobalRefit,
  kSceneTouch,
  kLwd,
  kSds,
  kVlr,
};
inline constexpr int kNumTerms = 10;
std::string_view to_string(Term term);
Term term_from_string(std::string_view name);

enum class Stage { kAnnotate, kPostprocess };
std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view name);

/// True for the terms summed by `stage`.
bool term_in_stage(Term term, Stage stage);

struct LossWeights {
  std::array<double, kNumTerms> lambda{};

  double& operator[](Term t) { return lambda[static_cast<int>(t)]; }
  double operator[](Term t) const { return lambda[static_cast<int>(t)]; }

  /// Finite and >= 0.
  void validate() const;
  static LossWeights ones();
};

struct PartWeights {
  double torso = 1.0;
  double limbs = 1.0;
  double hands = 2.0;
  double feet = 2.0;
};

struct LossParams {
  double stable_threshold = 0.03;  // m per frame
  double r_contact = 0.10;         // contact environment radius, m
  double d_torso = 0.10;
  double d_limb = 0.05;
  double w_torso = 1.0;
  double w_limb = 2.0;
  double eps_v = 0.02;             // SDS speed gate, m per frame
  double hpr_gamma = 2.0;
  bool gr_visible_only = true;     // L_GR over HPR-visible vertices only
  PartWeights part_weights;
  /// Frozen m2p correspondences come from nearest neighbours after ICP
  /// registration of the visible vertices (the value is still the unregistered
  /// Chamfer). When false, plain nearest neighbours are used.
  bool m2p_register = true;
  geometry::IcpConfig icp;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Stability

struct StabilityRecord {
  std::vector<std::array<bool, kNumLimbs>> stable;
  /// Scene-vertex indices near each stable limb; empty iff not stable.
  std::vector<std::array<std::vector<int>, kNumLimbs>> environment;

  std::size_t size() const { return stable.size(); }
  bool is_stable(std::size_t k, Limb limb) const { return stable[k][static_cast<int>(limb)]; }
};

/// A limb is stable at frame k >= 1 when its movement is < threshold and
/// strictly smaller than its sibling's. Its contact environment is every scene
/// vertex within r_contact of the limb centroid; a limb with an empty
/// environment is not marked stable. Throws std::invalid_argument for N < 2.
StabilityRecord detect_stable_limbs(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                                    const geometry::SceneIndex& scene, const LossParams& params = {});
StabilityRecord detect_stable_limbs(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                                    const SceneMesh& scene, const LossParams& params = {});

// ---------------------------------------------------------------------------
// Sequence terms (meters)

double contact_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                    const SceneMesh& scene, const StabilityRecord& stability);
double contact_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, const SceneMesh& scene,
                    const StabilityRecord& stability);

double sliding_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed,
                    const StabilityRecord& stability);
double sliding_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion,
                    const StabilityRecord& stability);

double trans_smooth_loss(const MotionSequence& motion, const Points& lidar_trajectory);

double joint_smooth_loss(const body::BodyTemplate& tmpl, const std::vector<body::PosedBody>& posed);
double joint_smooth_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion);

double sds_loss(const MotionSequence& motion, double eps_v = 0.02);

// ---------------------------------------------------------------------------
// Per-frame terms

/// Chamfer between the HPR-visible vertices of frame k and P (m^2).
double mesh2point_loss(const Points& vertices, const Points& human_points, const Vec3& lidar_origin,
                       double gamma = 2.0);
double mesh2point_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                       const Points& human_points, const Vec3& lidar_origin, double gamma = 2.0);

/// Part-gated squared distance to the nearest human point, normalized by the
/// number of contributing vertices. `visible` restricts the vertex set.
double global_refit_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                         const LossParams& params, const std::vector<int>* visible = nullptr);
double global_refit_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                         const Points& human_points, const LossParams& params,
                         const std::vector<int>* visible = nullptr);

/// sum max(0, -eta(v))^2 / V
double scene_touch_loss(const Points& vertices, const geometry::SceneIndex& scene);
double scene_touch_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                        const SceneMesh& scene);

/// Per-vertex part weight: hands/feet override limbs; torso otherwise.
std::vector<double> vertex_part_weights(const body::BodyTemplate& tmpl, const PartWeights& weights);

/// Part-weighted mean squared nearest distance from `vertices` (subset) to P.
double lwd_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                const PartWeights& weights, const std::vector<int>* visible = nullptr);
double lwd_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                const Points& human_points, const PartWeights& weights, const std::vector<int>* visible = nullptr);

/// Mean squared nearest distance from hand and foot vertices (subset) to P.
double vlr_loss(const body::BodyTemplate& tmpl, const Points& vertices, const Points& human_points,
                const std::vector<int>* visible = nullptr);
double vlr_loss(const body::BodyTemplate& tmpl, const MotionSequence& motion, std::size_t k,
                const Points& human_points, const std::vector<int>* visible = nullptr);

// ---------------------------------------------------------------------------
// Totals

/// Everything a sequence objective needs. Clouds are per frame (HUMAN points,
/// WORLD frame); lidar_trajectory holds the sensor origin per frame.
struct SequenceInputs {
  const body::BodyTemplate* tmpl = nullptr;
  const SceneMesh* scene = nullptr;
  const std::vector<PointCloudFrame>* clouds = nullptr;
  Points lidar_trajectory;

  /// Throws ValidationError when something `stage` needs is missing or inconsistent.
  void check(Stage stage, std::size_t n_frames) const;
};

struct LossBreakdown {
  std::array<double, kNumTerms> terms{};  // unweighted
  double total = 0.0;                     // sum of lambda * term over the stage

  double operator[](Term t) const { return terms[static_cast<int>(t)]; }
};

/// Direct evaluation with fresh gates and exact nearest neighbours. Per-frame
/// terms are averaged over frames.
LossBreakdown total_loss(Stage stage, const LossWeights& weights, const MotionSequence& motion,
                         const SequenceInputs& inputs, const LossParams& params = {});

/// Every term (both stages) with unit weights; `total` is their plain sum.
LossBreakdown all_terms(const MotionSequence& motion, const SequenceInputs& inputs, const LossParams& params = {});

}  // namespace scenefit::losses
