#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vical/config.hpp"

using namespace vical;

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_TRUE(parse_config("") == Config{});
  EXPECT_TRUE(parse_config("  \n\t\n") == Config{});
  EXPECT_TRUE(parse_config("{}") == Config{});
}

TEST(Config, DefaultsMatchStructs) {
  const Config c = parse_config("");
  EXPECT_EQ(c.episode.max_steps, 20);
  EXPECT_EQ(c.sac.batch, 256);
  EXPECT_DOUBLE_EQ(c.sac.alpha, 0.2);
  EXPECT_DOUBLE_EQ(c.mdp.thresholds.dtheta, 0.40);
  EXPECT_DOUBLE_EQ(c.mdp.thresholds.area, 0.03);
  EXPECT_DOUBLE_EQ(c.sac.tau, 0.001);
  EXPECT_DOUBLE_EQ(c.sac.adam.lr, 1e-4);
  EXPECT_TRUE(c.sac.auto_alpha);
  EXPECT_EQ(c.train.steps, 15000);
  EXPECT_EQ(c.eval.rigs, 20);
}

TEST(Config, PartialOverrideKeepsOtherDefaults) {
  const Config c = parse_config(R"({"seed": 7, "mdp": {"thresholds": {"poly": 0.2}}, "episode": {"task": "intrinsic"}})");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.mdp.thresholds.poly, 0.2);
  EXPECT_DOUBLE_EQ(c.mdp.thresholds.area, Thresholds{}.area);
  EXPECT_EQ(c.episode.task, Task::Intrinsic);
  EXPECT_EQ(c.sac.hidden, 256);
}

TEST(Config, UnknownTopLevelKeyNamesKeyAndLine) {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"sedd\": 2\n}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError &e) {
    EXPECT_EQ(e.key(), "sedd");
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("sedd"), std::string::npos);
  }
}

TEST(Config, UnknownNestedKeyReportsPath) {
  const std::string text = "{\n  \"mdp\": {\n    \"thresholds\": {\n      \"polly\": 0.1\n    }\n  }\n}";
  try {
    parse_config(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError &e) {
    EXPECT_EQ(e.key(), "mdp.thresholds.polly");
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Config, WrongTypesRejected) {
  EXPECT_THROW(parse_config(R"({"seed": "seven"})"), ParseError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ParseError);
  EXPECT_THROW(parse_config(R"({"episode": {"max_steps": 2.5}})"), ParseError);
  EXPECT_THROW(parse_config(R"({"sim": {"extr_pos_mean": [1, 2]}})"), ParseError);
  EXPECT_THROW(parse_config(R"({"mdp": 3})"), ParseError);
  EXPECT_THROW(parse_config(R"({"episode": {"task": "stereo"}})"), ParseError);
  EXPECT_THROW(parse_config(R"({"episode": {"auto_align": 1}})"), ParseError);
  EXPECT_THROW(parse_config(R"({"eval": {"policies": ["learned", 3]}})"), ParseError);
  EXPECT_THROW(parse_config(R"([1, 2])"), ParseError);
}

TEST(Config, InvalidValuesRejected) {
  try {
    parse_config("{\"episode\": {\n\"max_steps\": 0}}");
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_EQ(e.key(), "episode.max_steps");
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Config, MalformedJsonReportsLine) {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"sim\": {,}\n}");
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Config, RoundTrip) {
  Config c;
  c.seed = 99;
  c.mdp.thresholds.skew = 0.123456789012345;
  c.mdp.eta_center = 1.0 / 3.0;
  c.episode.task = Task::ExtrinsicKnownK;
  c.episode.solver = SolverMode::Stub;
  c.episode.gravity = GravitySource::Prior;
  c.sim.extr_rpy_mean = Vec3(0.1, -0.2, 1.57);
  c.eval.policies = {"random_moving"};
  c.train.rig_seed_base = 18446744073709551615ull;
  const Config back = parse_config(dump_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(dump_config(back), dump_config(c));
  EXPECT_EQ(back.mdp.eta_center, c.mdp.eta_center);
  EXPECT_TRUE(parse_config(dump_config(Config{})) == Config{});
}

TEST(Config, DumpListsEveryKey) {
  const nlohmann::json j = config_to_json(Config{});
  for (const char *k : {"seed", "sim", "mdp", "episode", "sac", "train", "eval"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["mdp"]["thresholds"].contains("dtheta"));
  EXPECT_TRUE(j["episode"]["calib"]["lm"].contains("cost_tol"));
  EXPECT_EQ(j["episode"]["gravity"], "rest_accel");
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "vical_cfg_test.json";
  std::ofstream(path) << "{\"train\": {\"steps\": 123}}";
  EXPECT_EQ(load_config(path.string()).train.steps, 123);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path.string()), ParseError);
}
