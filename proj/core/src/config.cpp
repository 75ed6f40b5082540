#include "scenefit/config.hpp"

#include "scenefit/io.hpp"
#include "scenefit/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#ifndef SCENEFIT_VERSION
#define SCENEFIT_VERSION "0.0.0"
#endif

namespace scenefit {

using nlohmann::ordered_json;
using losses::Term;

std::string_view version() { return SCENEFIT_VERSION; }

namespace {

constexpr const char* kMpjpeAlignment = "pelvis";

std::string sub(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void type_error(const std::string& what, const std::string& path) {
  throw ParseError("expected " + what, ParseError::kUnknownOffset, path);
}

/// A JSON object being read; keys asked for are "known", the rest are rejected
/// by finish().
class Section {
 public:
  Section(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) type_error("an object", path_.empty() ? "<root>" : path_);
  }

  const ordered_json* get(const char* key) {
    known_.emplace_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const char* key) const { return sub(path_, key); }

  void number(const char* key, double& out) {
    if (const auto* v = get(key)) {
      if (!v->is_number()) type_error("a number", path(key));
      out = v->get<double>();
    }
  }
  void integer(const char* key, int& out) {
    if (const auto* v = get(key)) {
      if (!v->is_number_integer()) type_error("an integer", path(key));
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        type_error("a 32-bit integer", path(key));
      }
      out = static_cast<int>(x);
    }
  }
  void boolean(const char* key, bool& out) {
    if (const auto* v = get(key)) {
      if (!v->is_boolean()) type_error("a boolean", path(key));
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const auto* v = get(key)) {
      if (!v->is_string()) type_error("a string", path(key));
      out = v->get<std::string>();
    }
  }
  void vec3(const char* key, Vec3& out) {
    if (const auto* v = get(key)) out = read_vec3(*v, path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(known_.begin(), known_.end(), it.key()) == known_.end()) {
        throw ParseError("unknown field", ParseError::kUnknownOffset, sub(path_, it.key()));
      }
    }
  }

  static Vec3 read_vec3(const ordered_json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) type_error("an array of 3 numbers", path);
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) type_error("a number", path + "[" + std::to_string(i) + "]");
      out[i] = v[i].get<double>();
    }
    return out;
  }

 private:
  const ordered_json& j_;
  std::string path_;
  std::vector<std::string> known_;
};

ordered_json vec(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

// Rethrows validation failures from nested structs as they are.
template <typename E>
E enum_from(const ordered_json* v, const std::string& path, E (*parse)(std::string_view)) {
  if (!v->is_string()) type_error("a string", path);
  try {
    return parse(v->get<std::string>());
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), ParseError::kUnknownOffset, path);
  }
}

optimize::FdMode fd_mode_from_string(std::string_view s) {
  if (s == "forward") return optimize::FdMode::kForward;
  if (s == "central") return optimize::FdMode::kCentral;
  throw ValidationError("unknown finite-difference mode '" + std::string(s) + "'");
}

ordered_json weights_json(const losses::LossWeights& w) {
  ordered_json j;
  for (int t = 0; t < losses::kNumTerms; ++t) j[std::string(losses::to_string(static_cast<Term>(t)))] = w.lambda[t];
  return j;
}

}  // namespace

synth::SynthConfig PipelineConfig::synth_config() const {
  synth::SynthConfig s = synth;
  s.seed = seed;
  return s;
}

calib::RansacConfig PipelineConfig::ransac_config() const {
  return {calib.ransac_iterations, calib.ransac_threshold, seed};
}

void PipelineConfig::validate() const {
  losses.validate();
  optimizer.validate();
  synth_config().validate();
  if (!std::isfinite(calib.forward_offset)) throw ValidationError("calib.forward_offset must be finite");
  if (calib.ransac_iterations < 1) throw ValidationError("calib.ransac_iterations must be >= 1");
  if (!(calib.ransac_threshold > 0.0)) throw ValidationError("calib.ransac_threshold must be positive");
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["version"] = version;
  j["seed"] = seed;

  const auto& l = losses;
  ordered_json lj;
  lj["stable_threshold"] = l.stable_threshold;
  lj["r_contact"] = l.r_contact;
  lj["d_torso"] = l.d_torso;
  lj["d_limb"] = l.d_limb;
  lj["w_torso"] = l.w_torso;
  lj["w_limb"] = l.w_limb;
  lj["eps_v"] = l.eps_v;
  lj["hpr_gamma"] = l.hpr_gamma;
  lj["gr_visible_only"] = l.gr_visible_only;
  lj["part_weights"] = {{"torso", l.part_weights.torso},
                        {"limbs", l.part_weights.limbs},
                        {"hands", l.part_weights.hands},
                        {"feet", l.part_weights.feet}};
  lj["m2p_register"] = l.m2p_register;
  lj["icp"] = {{"max_iters", l.icp.max_iters},
               {"tol", l.icp.tol},
               {"trim_fraction", l.icp.trim_fraction},
               {"init_centroids", l.icp.init_centroids}};
  j["losses"] = lj;

  const auto& o = optimizer;
  ordered_json oj;
  oj["learning_rate"] = o.adam.learning_rate;
  oj["beta1"] = o.adam.beta1;
  oj["beta2"] = o.adam.beta2;
  oj["epsilon"] = o.adam.epsilon;
  oj["max_iters"] = o.max_iters;
  oj["gradient_step"] = o.gradient_step;
  oj["fd_mode"] = o.fd_mode == optimize::FdMode::kForward ? "forward" : "central";
  oj["gate_refresh_period"] = o.gate_refresh_period;
  oj["convergence_tol"] = o.convergence_tol;
  oj["divergence_factor"] = o.divergence_factor;
  ordered_json schedule = ordered_json::array();
  for (const auto& s : o.schedule) {
    schedule.push_back({{"stage", std::string(losses::to_string(s.stage))},
                        {"max_iters", s.max_iters},
                        {"learning_rate", s.learning_rate ? ordered_json(*s.learning_rate) : ordered_json()},
                        {"weights", weights_json(s.weights)}});
  }
  oj["schedule"] = schedule;
  j["optimizer"] = oj;

  const auto& s = synth;
  ordered_json sj;
  sj["wall"] = std::string(synth::to_string(s.wall));
  sj["wall_width"] = s.wall_width;
  sj["wall_height"] = s.wall_height;
  sj["n_frames"] = s.n_frames;
  sj["frame_rate"] = s.frame_rate;
  if (s.holds) {
    ordered_json holds = ordered_json::array();
    for (const auto& h : *s.holds) holds.push_back({{"start", vec(h.start)}, {"end", vec(h.end)}});
    sj["holds"] = holds;
  } else {
    sj["holds"] = nullptr;
  }
  sj["lidar_sigma"] = s.lidar_sigma;
  sj["pose_sigma"] = s.pose_sigma;
  sj["drift"] = vec(s.drift);
  sj["points_per_frame"] = s.points_per_frame;
  sj["template_vertices"] = s.template_vertices;
  ordered_json beta = ordered_json::array();
  for (int i = 0; i < kNumBetas; ++i) beta.push_back(s.beta[i]);
  sj["beta"] = beta;
  j["synth"] = sj;

  j["calib"] = {{"forward_offset", calib.forward_offset},
                {"ransac_iterations", calib.ransac_iterations},
                {"ransac_threshold", calib.ransac_threshold}};
  j["metrics"] = {{"mpjpe_alignment", kMpjpeAlignment},
                  {"pck_threshold_m", metrics::kPckThreshold},
                  {"segment_length", metrics::kSegmentLength}};
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const ordered_json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    throw ParseError("malformed JSON", offset, io::json_path_at(text, offset));
  }

  PipelineConfig c;
  Section root(j, "");
  root.string("version", c.version);
  if (const auto* v = root.get("seed")) {
    if (!v->is_number_unsigned()) type_error("a non-negative integer", "seed");
    c.seed = v->get<std::uint64_t>();
  }

  if (const auto* v = root.get("losses")) {
    Section s(*v, "losses");
    auto& l = c.losses;
    s.number("stable_threshold", l.stable_threshold);
    s.number("r_contact", l.r_contact);
    s.number("d_torso", l.d_torso);
    s.number("d_limb", l.d_limb);
    s.number("w_torso", l.w_torso);
    s.number("w_limb", l.w_limb);
    s.number("eps_v", l.eps_v);
    s.number("hpr_gamma", l.hpr_gamma);
    s.boolean("gr_visible_only", l.gr_visible_only);
    if (const auto* p = s.get("part_weights")) {
      Section ps(*p, "losses.part_weights");
      ps.number("torso", l.part_weights.torso);
      ps.number("limbs", l.part_weights.limbs);
      ps.number("hands", l.part_weights.hands);
      ps.number("feet", l.part_weights.feet);
      ps.finish();
    }
    s.boolean("m2p_register", l.m2p_register);
    if (const auto* p = s.get("icp")) {
      Section is(*p, "losses.icp");
      is.integer("max_iters", l.icp.max_iters);
      is.number("tol", l.icp.tol);
      is.number("trim_fraction", l.icp.trim_fraction);
      is.boolean("init_centroids", l.icp.init_centroids);
      is.finish();
    }
    s.finish();
  }

  if (const auto* v = root.get("optimizer")) {
    Section s(*v, "optimizer");
    auto& o = c.optimizer;
    s.number("learning_rate", o.adam.learning_rate);
    s.number("beta1", o.adam.beta1);
    s.number("beta2", o.adam.beta2);
    s.number("epsilon", o.adam.epsilon);
    s.integer("max_iters", o.max_iters);
    s.number("gradient_step", o.gradient_step);
    if (const auto* m = s.get("fd_mode")) o.fd_mode = enum_from(m, s.path("fd_mode"), &fd_mode_from_string);
    s.integer("gate_refresh_period", o.gate_refresh_period);
    s.number("convergence_tol", o.convergence_tol);
    s.number("divergence_factor", o.divergence_factor);
    if (const auto* sched = s.get("schedule")) {
      if (!sched->is_array()) type_error("an array", "optimizer.schedule");
      o.schedule.clear();
      for (std::size_t i = 0; i < sched->size(); ++i) {
        const std::string path = "optimizer.schedule[" + std::to_string(i) + "]";
        Section st((*sched)[i], path);
        optimize::StageSpec spec;
        const auto* stage = st.get("stage");
        if (!stage) throw ParseError("missing field", ParseError::kUnknownOffset, path + ".stage");
        spec.stage = enum_from(stage, path + ".stage", &losses::stage_from_string);
        spec.weights = optimize::OptimizerConfig::default_weights(spec.stage);
        spec.learning_rate = optimize::OptimizerConfig::default_learning_rate(spec.stage);
        spec.max_iters = o.max_iters;
        st.integer("max_iters", spec.max_iters);
        if (const auto* lr = st.get("learning_rate")) {
          if (lr->is_null()) {
            spec.learning_rate.reset();
          } else {
            if (!lr->is_number()) type_error("a number or null", path + ".learning_rate");
            spec.learning_rate = lr->get<double>();
          }
        }
        if (const auto* w = st.get("weights")) {
          Section ws(*w, path + ".weights");
          for (int t = 0; t < losses::kNumTerms; ++t) {
            const std::string name(losses::to_string(static_cast<Term>(t)));
            ws.number(name.c_str(), spec.weights.lambda[t]);
          }
          ws.finish();
        }
        st.finish();
        o.schedule.push_back(spec);
      }
    }
    s.finish();
  }

  if (const auto* v = root.get("synth")) {
    Section s(*v, "synth");
    auto& sy = c.synth;
    if (const auto* w = s.get("wall")) sy.wall = enum_from(w, "synth.wall", &synth::wall_type_from_string);
    s.number("wall_width", sy.wall_width);
    s.number("wall_height", sy.wall_height);
    s.integer("n_frames", sy.n_frames);
    s.number("frame_rate", sy.frame_rate);
    if (const auto* h = s.get("holds")) {
      if (h->is_null()) {
        sy.holds.reset();
      } else {
        if (!h->is_array() || h->size() != 4) type_error("null or an array of 4 limb paths", "synth.holds");
        synth::HoldPlan plan;
        for (std::size_t i = 0; i < 4; ++i) {
          const std::string path = "synth.holds[" + std::to_string(i) + "]";
          Section hs((*h)[i], path);
          const auto* start = hs.get("start");
          const auto* end = hs.get("end");
          if (!start || !end) throw ParseError("missing field", ParseError::kUnknownOffset, path + (start ? ".end" : ".start"));
          plan[i].start = Section::read_vec3(*start, path + ".start");
          plan[i].end = Section::read_vec3(*end, path + ".end");
          hs.finish();
        }
        sy.holds = plan;
      }
    }
    s.number("lidar_sigma", sy.lidar_sigma);
    s.number("pose_sigma", sy.pose_sigma);
    s.vec3("drift", sy.drift);
    s.integer("points_per_frame", sy.points_per_frame);
    s.integer("template_vertices", sy.template_vertices);
    if (const auto* b = s.get("beta")) {
      if (!b->is_array() || b->size() != kNumBetas) type_error("an array of 10 numbers", "synth.beta");
      for (int i = 0; i < kNumBetas; ++i) {
        if (!(*b)[i].is_number()) type_error("a number", "synth.beta[" + std::to_string(i) + "]");
        sy.beta[i] = (*b)[i].get<double>();
      }
    }
    s.finish();
  }

  if (const auto* v = root.get("calib")) {
    Section s(*v, "calib");
    s.number("forward_offset", c.calib.forward_offset);
    s.integer("ransac_iterations", c.calib.ransac_iterations);
    s.number("ransac_threshold", c.calib.ransac_threshold);
    s.finish();
  }

  if (const auto* v = root.get("metrics")) {
    // Conventions are fixed; the section exists so that reports are auditable.
    Section s(*v, "metrics");
    std::string alignment = kMpjpeAlignment;
    double threshold = metrics::kPckThreshold;
    int segment = static_cast<int>(metrics::kSegmentLength);
    s.string("mpjpe_alignment", alignment);
    s.number("pck_threshold_m", threshold);
    s.integer("segment_length", segment);
    s.finish();
    if (alignment != kMpjpeAlignment || threshold != metrics::kPckThreshold ||
        segment != static_cast<int>(metrics::kSegmentLength)) {
      throw ValidationError("metrics conventions are fixed (pelvis alignment, PCK 0.3 m, 100-frame segments)");
    }
  }
  root.finish();
  c.synth.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace scenefit
