#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "v2xmeta/config.hpp"
#include "v2xmeta/studies.hpp"

using namespace v2xmeta;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Small enough to run the whole pipeline in a few seconds.
RunConfig tiny(const fs::path& out) {
  auto c = parse_config(R"(
task_set = desk
hidden = 8,4
outer_loops = 2
tasks_per_loop = 2
inner_loops = 1
trajectories = 1
updates = 2
eval_every = 1
eval_tasks = 1
eval_episodes = 1
adapt_loops = 1
calibration_episodes = 1
)");
  c.out = out.string();
  return c;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("empty config gives the published defaults") {
  const auto c = parse_config("");
  CHECK(c.gamma == 0.99);
  CHECK(c.gae_lambda == 0.95);
  CHECK(c.learning_rate == 3e-4);
  CHECK(c.meta_step == 1e-4);
  CHECK(c.outer_loops == 200);
  CHECK(c.tasks_per_loop == 20);
  CHECK(c.updates == 10);
  CHECK(c.adapt_loops == 2);
}

TEST_CASE("payload override reaches the environment") {
  const auto c = parse_config("payload_multiple = 3\n");
  CHECK(task_from(c).payload_bits == 25440.0);
}

TEST_CASE("unknown keys and bad lines") {
  try {
    parse_config("gamma = 0.9\nlearning_rte = 1\n", "x.cfg");
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("learning_rate") != std::string::npos);
    CHECK(msg.find("x.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("gamma 0.9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("updates = ten\n"), ConfigError);
  CHECK(suggest_key("learning_rte") == "learning_rate");
  CHECK(suggest_key("zzzzzzzz").empty());
}

TEST_CASE("constraint violations") {
  auto c = parse_config("task_set = desk\ntasks_per_loop = 40\n");
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = parse_config("mode = train\n");
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("emit and parse round-trip") {
  auto c = parse_config("seed = 77\nhidden = 32,16\nupsilon = 3.25\npolicies = random\n", "<t>", true);
  CHECK(c.desk);
  CHECK(c.matched_episodes == 1000);
  CHECK(parse_config(emit_config(c)) == c);
  const auto d = parse_config("");
  CHECK(parse_config(emit_config(d)) == d);
  CHECK(config_hash(c) != config_hash(d));
}

TEST_CASE("manifest lists every key and no clock values") {
  const auto c = parse_config("");
  const auto m = make_manifest(c, {"a.csv"});
  for (const auto& k : config_keys()) CHECK(m.at("config").contains(k));
  CHECK(m.dump().find("time") == std::string::npos);
}

TEST_CASE("pipeline: meta-train, zero-round adapt, rerun determinism") {
  const auto root = fs::temp_directory_path() / "v2xmeta_cli_test";
  fs::remove_all(root);
  auto c = tiny(root / "a");
  studies::run(c);
  CHECK(fs::exists(root / "a" / "meta_checkpoint.json"));
  CHECK(fs::exists(root / "a" / "fig2.csv"));
  CHECK(fs::exists(root / "a" / "manifest.json"));

  auto again = tiny(root / "b");
  studies::run(again);
  for (const char* f : {"fig2.csv", "training_curve.csv", "meta_checkpoint.json"})
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));

  auto adapt = tiny(root / "c");
  adapt.mode = "adapt";
  adapt.adapt_loops = 0;
  adapt.checkpoint = (root / "a" / "meta_checkpoint.json").string();
  studies::run(adapt);
  CHECK(slurp(root / "c" / "adapted_checkpoint.json") == slurp(root / "a" / "meta_checkpoint.json"));

  adapt.mode = "evaluate";
  adapt.adapt_loops = 1;
  adapt.policies = {"meta-init", "random"};
  adapt.study_seeds = 1;
  adapt.out = (root / "d").string();
  studies::run(adapt);
  CHECK(fs::exists(root / "d" / "evaluation.csv"));
  CHECK(fs::exists(root / "d" / "episode_log_random.csv"));

  auto missing = tiny(root / "e");
  missing.mode = "adapt";
  CHECK_THROWS_AS(studies::run(missing), ConfigError);
  fs::remove_all(root);
}

}  // TEST_SUITE
