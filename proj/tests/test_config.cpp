#include "scenefit/config.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

using namespace scenefit;
using nlohmann::ordered_json;

namespace {

std::string edited(void (*edit)(ordered_json&)) {
  ordered_json j = ordered_json::parse(PipelineConfig{}.to_json());
  edit(j);
  return j.dump();
}

// Returns the field named by the ParseError, or "" if none was thrown.
std::string parse_error_field(const std::string& text) {
  try {
    PipelineConfig::from_json(text);
  } catch (const ParseError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(PipelineConfigTest, DefaultsValidate) {
  const PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.version, version());
  EXPECT_EQ(c.optimizer.schedule.size(), 2u);
}

TEST(PipelineConfigTest, DumpParseRoundTrip) {
  const PipelineConfig c;
  const std::string text = c.to_json();
  const PipelineConfig back = PipelineConfig::from_json(text);
  EXPECT_EQ(back.to_json(), text);
  EXPECT_EQ(back, c);
}

TEST(PipelineConfigTest, RoundTripKeepsEdits) {
  PipelineConfig c;
  c.seed = 123;
  c.losses.hpr_gamma = 1.5;
  c.optimizer.schedule[0].learning_rate.reset();
  c.optimizer.schedule[1].weights[losses::Term::kSds] = 0.5;
  c.synth.drift = Vec3(0.1, -0.2, 0.3);
  c.synth.holds = synth::default_holds(synth::WallType::kOverhang);
  c.synth.wall = synth::WallType::kOverhang;
  const PipelineConfig back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.seed, 123u);
  EXPECT_FALSE(back.optimizer.schedule[0].learning_rate.has_value());
  EXPECT_EQ(back.synth.drift, c.synth.drift);
  ASSERT_TRUE(back.synth.holds.has_value());
  EXPECT_EQ(back.synth_config().seed, 123u);
}

TEST(PipelineConfigTest, MissingKeysKeepDefaults) {
  const PipelineConfig c = PipelineConfig::from_json(R"({"seed": 9, "losses": {"r_contact": 0.2}})");
  PipelineConfig expect;
  expect.seed = 9;
  expect.synth.seed = 9;
  expect.losses.r_contact = 0.2;
  EXPECT_EQ(c, expect);
  EXPECT_EQ(PipelineConfig::from_json("{}"), PipelineConfig{});
}

TEST(PipelineConfigTest, UnknownKeysNameTheField) {
  EXPECT_EQ(parse_error_field(R"({"sede": 1})"), "sede");
  EXPECT_EQ(parse_error_field(R"({"losses": {"icp": {"iters": 3}}})"), "losses.icp.iters");
  EXPECT_EQ(parse_error_field(edited([](ordered_json& j) { j["optimizer"]["schedule"][1]["weights"]["XYZ"] = 1; })),
            "optimizer.schedule[1].weights.XYZ");
}

TEST(PipelineConfigTest, TypeErrorsNameTheField) {
  EXPECT_EQ(parse_error_field(R"({"seed": -1})"), "seed");
  EXPECT_EQ(parse_error_field(R"({"losses": {"hpr_gamma": "2"}})"), "losses.hpr_gamma");
  EXPECT_EQ(parse_error_field(R"({"optimizer": {"max_iters": 2.5}})"), "optimizer.max_iters");
  EXPECT_EQ(parse_error_field(R"({"optimizer": {"fd_mode": "backward"}})"), "optimizer.fd_mode");
  EXPECT_EQ(parse_error_field(R"({"synth": {"drift": [0, 1]}})"), "synth.drift");
  EXPECT_EQ(parse_error_field(R"({"synth": {"wall": "slab"}})"), "synth.wall");
  EXPECT_EQ(parse_error_field(R"({"optimizer": {"schedule": [{"max_iters": 3}]}})"), "optimizer.schedule[0].stage");
}

TEST(PipelineConfigTest, MalformedJsonReportsOffset) {
  const std::string text = R"({"seed": 7, "losses": {"r_contact": })";
  try {
    PipelineConfig::from_json(text);
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_NE(e.offset(), ParseError::kUnknownOffset);
    EXPECT_LE(e.offset(), text.size());
  }
}

TEST(PipelineConfigTest, OutOfRangeIsValidationError) {
  EXPECT_THROW(PipelineConfig::from_json(R"({"calib": {"ransac_iterations": 0}})"), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"synth": {"n_frames": 2}})"), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"metrics": {"pck_threshold_m": 0.5}})"), ValidationError);
}

TEST(PipelineConfigTest, NullLearningRateInheritsGlobal) {
  const PipelineConfig c = PipelineConfig::from_json(
      R"({"optimizer": {"learning_rate": 0.05, "schedule": [{"stage": "ANNOTATE", "learning_rate": null}]}})");
  ASSERT_EQ(c.optimizer.schedule.size(), 1u);
  EXPECT_FALSE(c.optimizer.schedule[0].learning_rate.has_value());
  EXPECT_EQ(c.optimizer.adam.learning_rate, 0.05);
}

TEST(PipelineConfigTest, StageDefaultsFillOmittedFields) {
  const PipelineConfig c = PipelineConfig::from_json(R"({"optimizer": {"schedule": [{"stage": "POSTPROCESS"}]}})");
  ASSERT_EQ(c.optimizer.schedule.size(), 1u);
  const auto& s = c.optimizer.schedule[0];
  EXPECT_EQ(s.weights.lambda, optimize::OptimizerConfig::default_weights(losses::Stage::kPostprocess).lambda);
  EXPECT_EQ(s.learning_rate, optimize::OptimizerConfig::default_learning_rate(losses::Stage::kPostprocess));
}
