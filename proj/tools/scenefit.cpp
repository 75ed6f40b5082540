// scenefit command line tool: synth, calibrate, refine, evaluate, config.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 optimization aborted.

#include "scenefit/body.hpp"
#include "scenefit/calib.hpp"
#include "scenefit/config.hpp"
#include "scenefit/io.hpp"
#include "scenefit/metrics.hpp"
#include "scenefit/optimize.hpp"
#include "scenefit/parallel.hpp"
#include "scenefit/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace scenefit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitAborted = 2;

struct Globals {
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string manifest_path;
  std::vector<std::string> argv;
};

// Records inputs and outputs of one run and appends it to a manifest file.
class Manifest {
 public:
  Manifest(std::string command, const Globals& globals)
      : command_(std::move(command)), globals_(globals), start_(std::chrono::steady_clock::now()) {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    started_at_ = buf;
  }

  void input(const fs::path& path) { inputs_.push_back(entry(path)); }
  void output(const fs::path& path) { outputs_.push_back(entry(path)); }
  void set_config(const PipelineConfig& config) { config_ = ordered_json::parse(config.to_json()); }

  void write(const fs::path& path, int exit_code) const {
    ordered_json doc;
    if (fs::exists(path)) {
      try {
        doc = ordered_json::parse(io::read_file(path));
      } catch (const ordered_json::exception& e) {
        throw Error("manifest '" + path.string() + "' is not valid JSON: " + e.what());
      }
      if (!doc.is_object() || !doc.contains("runs") || !doc["runs"].is_array()) {
        throw Error("manifest '" + path.string() + "' has no runs array");
      }
    } else {
      doc["runs"] = ordered_json::array();
    }
    ordered_json run;
    run["command"] = command_;
    run["argv"] = globals_.argv;
    run["version"] = std::string(version());
    if (!config_.is_null()) {
      run["seed"] = config_["seed"];
      run["config"] = config_;
    }
    run["inputs"] = inputs_;
    run["outputs"] = outputs_;
    run["exit_code"] = exit_code;
    run["started_at"] = started_at_;
    run["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc["runs"].push_back(std::move(run));
    io::write_file(path, doc.dump(1) + "\n");
  }

 private:
  static ordered_json entry(const fs::path& path) {
    return {{"path", path.string()}, {"fnv1a", io::hex64(io::fnv1a(io::read_file(path)))}};
  }

  std::string command_;
  const Globals& globals_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
  ordered_json config_;
  std::vector<ordered_json> inputs_;
  std::vector<ordered_json> outputs_;
};

// Config precedence: flags > config file > defaults.
PipelineConfig load_config(const Globals& g, Manifest* manifest) {
  PipelineConfig config;
  if (!g.config_path.empty()) {
    const std::string text = io::read_file(g.config_path);
    try {
      config = PipelineConfig::from_json(text);
    } catch (const Error& e) {
      throw Error(g.config_path + ": " + e.what());
    }
    if (manifest) manifest->input(g.config_path);
  }
  if (g.seed) config.seed = *g.seed;
  return config;
}

fs::path manifest_location(const Globals& g, const fs::path& fallback) {
  return g.manifest_path.empty() ? fallback : fs::path(g.manifest_path);
}

std::string cloud_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.ply", k);
  return buf;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_directory(file.parent_path());
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::string wall;
  std::optional<int> frames;
  std::vector<double> drift;
  std::optional<double> pose_sigma;
  std::optional<double> lidar_sigma;
  std::optional<int> points_per_frame;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  Manifest manifest("synth", g);
  PipelineConfig config = load_config(g, &manifest);
  if (!a.wall.empty()) config.synth.wall = synth::wall_type_from_string(a.wall);
  if (a.frames) config.synth.n_frames = *a.frames;
  if (!a.drift.empty()) config.synth.drift = Vec3(a.drift[0], a.drift[1], a.drift[2]);
  if (a.pose_sigma) config.synth.pose_sigma = *a.pose_sigma;
  if (a.lidar_sigma) config.synth.lidar_sigma = *a.lidar_sigma;
  if (a.points_per_frame) config.synth.points_per_frame = *a.points_per_frame;
  config.validate();
  manifest.set_config(config);

  const synth::Fixture f = synth::make_fixture(config.synth_config());
  const fs::path out(a.out);
  ensure_directory(out / "clouds");
  const auto put = [&](const fs::path& p, auto&& writer) {
    writer(p);
    manifest.output(p);
  };
  put(out / "template.json", [&](const fs::path& p) { io::write_template(p, f.tmpl); });
  put(out / "scene.ply", [&](const fs::path& p) { io::write_mesh(p, f.scene); });
  put(out / "truth.json", [&](const fs::path& p) { io::write_motion(p, f.truth); });
  put(out / "init.json", [&](const fs::path& p) { io::write_motion(p, f.init); });
  put(out / "trajectory.json", [&](const fs::path& p) { io::write_trajectory(p, f.lidar_trajectory); });
  for (std::size_t k = 0; k < f.clouds.size(); ++k) {
    put(out / "clouds" / cloud_name(k), [&](const fs::path& p) { io::write_cloud(p, f.clouds[k]); });
  }
  std::cout << "wrote " << f.truth.size() << " frames (" << synth::to_string(config.synth.wall) << ") to "
            << out.string() << "\n";
  manifest.write(manifest_location(g, out / "manifest.json"), kExitOk);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string normals;
  std::string cloud;
  std::string out;
  std::optional<double> forward_offset;
};

Vec3 json_vec3(const ordered_json& j, const char* key, const std::string& file) {
  if (!j.contains(key)) throw ParseError(file + ": missing field", ParseError::kUnknownOffset, key);
  const ordered_json& v = j[key];
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
    throw ParseError(file + ": expected 3 numbers", ParseError::kUnknownOffset, key);
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

calib::CalibrationInput read_normals(const fs::path& path) {
  const std::string text = io::read_file(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON", e.byte > 0 ? e.byte - 1 : 0, "");
  }
  if (!j.is_object()) throw ParseError(path.string() + ": expected an object", 0, "");
  for (const auto& [key, value] : j.items()) {
    if (key != "ground_normal" && key != "plane_normal" && key != "lidar_height") {
      throw ParseError(path.string() + ": unknown field", ParseError::kUnknownOffset, key);
    }
  }
  calib::CalibrationInput in;
  in.ground_normal = json_vec3(j, "ground_normal", path.string());
  in.plane_normal = json_vec3(j, "plane_normal", path.string());
  if (!j.contains("lidar_height") || !j["lidar_height"].is_number()) {
    throw ParseError(path.string() + ": expected a number", ParseError::kUnknownOffset, "lidar_height");
  }
  in.lidar_height = j["lidar_height"].get<double>();
  return in;
}

// Ground and wall planes from a LiDAR-frame scan: the two largest RANSAC
// planes, the one closer to the sensor's z axis being the ground. The sensor
// sits at the origin; g points up towards it, m points away from it.
calib::CalibrationInput estimate_normals(const PointCloudFrame& cloud, const calib::RansacConfig& rc) {
  if (cloud.frame != Frame::kLidar) {
    throw FrameMismatch("calibration scan must be in LIDAR, got " + std::string(to_string(cloud.frame)));
  }
  const calib::PlaneFit first = calib::fit_plane_ransac(cloud.points, rc);
  Points rest;
  std::size_t next = 0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (next < first.inliers.size() && first.inliers[next] == static_cast<int>(i)) {
      ++next;
      continue;
    }
    rest.push_back(cloud.points[i]);
  }
  const calib::PlaneFit second = calib::fit_plane_ransac(rest, rc);
  const bool first_is_ground = std::abs(first.normal.z()) >= std::abs(second.normal.z());
  calib::PlaneFit ground = first_is_ground ? first : second;
  calib::PlaneFit wall = first_is_ground ? second : first;
  if (ground.offset > 0.0) {
    ground.normal = -ground.normal;
    ground.offset = -ground.offset;
  }
  if (wall.offset < 0.0) {
    wall.normal = -wall.normal;
    wall.offset = -wall.offset;
  }
  calib::CalibrationInput in;
  in.ground_normal = ground.normal;
  in.plane_normal = wall.normal;
  in.lidar_height = -ground.offset;
  return in;
}

int run_calibrate(const Globals& g, const CalibrateArgs& a) {
  Manifest manifest("calibrate", g);
  PipelineConfig config = load_config(g, &manifest);
  if (a.forward_offset) config.calib.forward_offset = *a.forward_offset;
  config.validate();
  manifest.set_config(config);

  calib::CalibrationInput in;
  if (!a.normals.empty()) {
    in = read_normals(a.normals);
    manifest.input(a.normals);
  } else {
    in = estimate_normals(io::read_cloud(a.cloud), config.ransac_config());
    manifest.input(a.cloud);
  }
  const calib::LidarCalibration c = calib::coarse_calibration_lidar(in, config.calib.forward_offset);
  ensure_parent(a.out);
  io::write_transform(a.out, c.transform);
  manifest.output(a.out);

  ordered_json summary;
  summary["ground_normal"] = {in.ground_normal.x(), in.ground_normal.y(), in.ground_normal.z()};
  summary["plane_normal"] = {in.plane_normal.x(), in.plane_normal.y(), in.plane_normal.z()};
  summary["lidar_height"] = in.lidar_height;
  summary["raw_deviation"] = c.raw_deviation;
  summary["deviation"] = c.deviation;
  std::cout << summary.dump(1) << "\n";
  manifest.write(manifest_location(g, fs::path(a.out).parent_path() / "manifest.json"), kExitOk);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// refine

struct RefineArgs {
  std::string motion;
  std::string clouds;
  std::string scene;
  std::string trajectory;
  std::string tmpl;
  std::string out;
  bool csv = false;
};

int run_refine(const Globals& g, const RefineArgs& a) {
  Manifest manifest("refine", g);
  const PipelineConfig config = load_config(g, &manifest);
  config.validate();
  manifest.set_config(config);

  const MotionSequence init = io::read_motion(a.motion);
  manifest.input(a.motion);
  if (init.frame != Frame::kWorld) {
    throw FrameMismatch(a.motion + ": motion must be in WORLD, got " + std::string(to_string(init.frame)));
  }
  const body::BodyTemplate tmpl = io::read_template(a.tmpl);
  manifest.input(a.tmpl);
  const SceneMesh scene = io::read_mesh(a.scene);
  manifest.input(a.scene);
  const Points trajectory = io::read_trajectory(a.trajectory);
  manifest.input(a.trajectory);
  if (trajectory.size() != init.size()) {
    throw ValidationError(a.trajectory + ": " + std::to_string(trajectory.size()) + " positions for " +
                          std::to_string(init.size()) + " motion frames");
  }
  std::vector<PointCloudFrame> clouds;
  clouds.reserve(init.size());
  for (std::size_t k = 0; k < init.size(); ++k) {
    const fs::path p = fs::path(a.clouds) / cloud_name(k);
    clouds.push_back(io::read_cloud(p));
    manifest.input(p);
    if (clouds.back().frame != Frame::kWorld) {
      throw FrameMismatch(p.string() + ": cloud must be in WORLD, got " +
                          std::string(to_string(clouds.back().frame)));
    }
  }

  const losses::SequenceInputs inputs{&tmpl, &scene, &clouds, trajectory};
  const auto [refined, report] = optimize::refine_sequence(init, inputs, config.losses, config.optimizer);

  const fs::path out(a.out);
  ensure_directory(out);
  io::write_motion(out / "refined.json", refined);
  manifest.output(out / "refined.json");
  io::write_file(out / "report.json", optimize::report_to_json(report));
  manifest.output(out / "report.json");
  if (a.csv) {
    io::write_file(out / "report.csv", optimize::report_to_csv(report));
    manifest.output(out / "report.csv");
  }
  const int code = report.aborted ? kExitAborted : kExitOk;
  for (const optimize::StageReport& s : report.stages) {
    std::cout << losses::to_string(s.stage) << ": " << s.iterations << " iterations, loss " << s.initial_loss
              << " -> " << s.best_loss;
    if (s.aborted) std::cout << " (aborted: " << s.abort_reason << ")";
    std::cout << "\n";
  }
  manifest.write(manifest_location(g, out / "manifest.json"), code);
  if (report.aborted) std::cerr << "error: optimization aborted; partial report in " << (out / "report.json") << "\n";
  return code;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string pred;
  std::string gt;
  std::string tmpl;
  std::string out;
  std::string csv;
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  Manifest manifest("evaluate", g);
  const PipelineConfig config = load_config(g, &manifest);
  config.validate();
  manifest.set_config(config);

  const MotionSequence pred = io::read_motion(a.pred);
  manifest.input(a.pred);
  const MotionSequence gt = io::read_motion(a.gt);
  manifest.input(a.gt);
  body::BodyTemplate tmpl;
  if (!a.tmpl.empty()) {
    tmpl = io::read_template(a.tmpl);
    manifest.input(a.tmpl);
  } else {
    tmpl = body::make_synthetic_template(config.synth.template_vertices, config.seed);
  }
  const metrics::EvalResult result = metrics::evaluate(tmpl, pred, gt);
  const std::string json = metrics::to_json(result);
  std::cout << json;
  fs::path manifest_dir;
  if (!a.out.empty()) {
    ensure_parent(a.out);
    io::write_file(a.out, json);
    manifest.output(a.out);
    manifest_dir = fs::path(a.out).parent_path();
  }
  if (!a.csv.empty()) {
    ensure_parent(a.csv);
    io::write_file(a.csv, metrics::to_csv(result));
    manifest.output(a.csv);
    if (manifest_dir.empty()) manifest_dir = fs::path(a.csv).parent_path();
  }
  if (!g.manifest_path.empty() || !a.out.empty() || !a.csv.empty()) {
    manifest.write(manifest_location(g, manifest_dir / "manifest.json"), kExitOk);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// config

int run_config(const Globals& g, bool dump, const std::string& check) {
  if (!check.empty()) {
    const std::string text = check == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {})
                                          : io::read_file(check);
    try {
      PipelineConfig::from_json(text).validate();
    } catch (const Error& e) {
      throw Error((check == "-" ? std::string("<stdin>") : check) + ": " + e.what());
    }
    std::cout << "ok\n";
  }
  if (dump) {
    const PipelineConfig config = load_config(g, nullptr);
    config.validate();
    std::cout << config.to_json();
  }
  if (!g.manifest_path.empty()) {
    Manifest manifest("config", g);
    manifest.set_config(load_config(g, &manifest));
    manifest.write(g.manifest_path, kExitOk);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-aware refinement of climbing motion captured with LiDAR and IMUs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  Globals g;
  g.argv.assign(argv, argv + argc);
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "Seed for every random draw (overrides the config)");
  app.add_option("--config", g.config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--manifest", g.manifest_path, "Manifest file to append this run to");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic climbing fixture");
  synth_cmd->add_option("--out", sa.out, "Output directory")->required();
  synth_cmd->add_option("--wall", sa.wall, "HORIZONTAL, VERTICAL or OVERHANG")
      ->check(CLI::IsMember({"HORIZONTAL", "VERTICAL", "OVERHANG"}));
  synth_cmd->add_option("--frames", sa.frames, "Number of frames");
  synth_cmd->add_option("--drift", sa.drift, "Root drift at the last frame (m)")->expected(3);
  synth_cmd->add_option("--pose-sigma", sa.pose_sigma, "Joint rotation noise (rad)");
  synth_cmd->add_option("--lidar-sigma", sa.lidar_sigma, "Point noise (m)");
  synth_cmd->add_option("--points-per-frame", sa.points_per_frame, "Points kept per cloud (0 = all visible)");

  CalibrateArgs ca;
  auto* calib_cmd = app.add_subcommand("calibrate", "Coarse LiDAR-to-world calibration");
  auto* normals_opt = calib_cmd->add_option("--normals", ca.normals, "JSON with ground_normal, plane_normal, lidar_height");
  auto* cloud_opt = calib_cmd->add_option("--cloud", ca.cloud, "LiDAR-frame scene scan (PLY) for RANSAC plane fitting");
  normals_opt->excludes(cloud_opt);
  calib_cmd->add_option("--forward-offset", ca.forward_offset, "Forward offset of the sensor (m)");
  calib_cmd->add_option("--out", ca.out, "Output transform JSON")->required();
  calib_cmd->callback([&] {
    if (ca.normals.empty() && ca.cloud.empty()) throw CLI::RequiredError("--normals or --cloud");
  });

  RefineArgs ra;
  auto* refine_cmd = app.add_subcommand("refine", "Refine a motion against LiDAR clouds and the scene");
  refine_cmd->add_option("--motion", ra.motion, "Initial WORLD motion JSON")->required();
  refine_cmd->add_option("--clouds", ra.clouds, "Directory of frame_NNNNN.ply HUMAN clouds")->required();
  refine_cmd->add_option("--scene", ra.scene, "Scene mesh PLY")->required();
  refine_cmd->add_option("--trajectory", ra.trajectory, "LiDAR trajectory JSON")->required();
  refine_cmd->add_option("--template", ra.tmpl, "Body template JSON")->required();
  refine_cmd->add_option("--out", ra.out, "Output directory")->required();
  refine_cmd->add_flag("--csv", ra.csv, "Also write report.csv");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compare a predicted motion with ground truth");
  eval_cmd->add_option("pred", ea.pred, "Predicted motion JSON")->required();
  eval_cmd->add_option("gt", ea.gt, "Ground-truth motion JSON")->required();
  eval_cmd->add_option("--template", ea.tmpl, "Body template JSON (default: synthetic template)");
  eval_cmd->add_option("--report,--out", ea.out, "Write the metrics JSON here");
  eval_cmd->add_option("--csv", ea.csv, "Write the metrics CSV here");

  bool dump = false;
  std::string check;
  auto* config_cmd = app.add_subcommand("config", "Print or check a pipeline config");
  config_cmd->add_flag("--dump", dump, "Print the effective config");
  config_cmd->add_option("--check", check, "Validate a config file ('-' reads stdin)");
  config_cmd->callback([&] {
    if (!dump && check.empty()) throw CLI::RequiredError("--dump or --check");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    set_num_threads(g.threads);
    if (*synth_cmd) return run_synth(g, sa);
    if (*calib_cmd) return run_calibrate(g, ca);
    if (*refine_cmd) return run_refine(g, ra);
    if (*eval_cmd) return run_evaluate(g, ea);
    if (*config_cmd) return run_config(g, dump, check);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
