#pragma once

#include "scenefit/calib.hpp"
#include "scenefit/losses.hpp"
#include "scenefit/optimize.hpp"
#include "scenefit/synth.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace scenefit {

/// Library version, e.g. "0.3.0".
std::string_view version();

struct CalibConfig {
  double forward_offset = calib::kDefaultForwardOffset;
  int ransac_iterations = 500;
  double ransac_threshold = 0.02;
};

/// Every tunable of the pipeline in one document. The seed drives all
/// randomness (synthetic data, RANSAC).
struct PipelineConfig {
  std::string version{scenefit::version()};
  std::uint64_t seed = 7;
  losses::LossParams losses;
  optimize::OptimizerConfig optimizer = optimize::OptimizerConfig::defaults();
  synth::SynthConfig synth;
  CalibConfig calib;

  /// Synth config with the pipeline seed applied.
  synth::SynthConfig synth_config() const;
  calib::RansacConfig ransac_config() const;

  /// Throws ValidationError.
  void validate() const;

  /// Complete document: every key is written.
  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys and type errors throw
  /// ParseError naming the field; out-of-range values throw ValidationError.
  static PipelineConfig from_json(std::string_view text);

  bool operator==(const PipelineConfig& other) const { return to_json() == other.to_json(); }
};

}  // namespace scenefit
