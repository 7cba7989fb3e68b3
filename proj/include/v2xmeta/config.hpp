#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "v2xmeta/environment.hpp"
#include "v2xmeta/meta.hpp"
#include "v2xmeta/ppo.hpp"

namespace v2xmeta {

/// Everything a run needs. Config files are plain `key = value` lines with
/// `#` comments; list values are comma separated.
struct RunConfig {
  std::string mode = "meta-train";
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out = "run";
  bool desk = false;

  // Task (the single task for adapt / evaluate / calibrate and the study task).
  int links_per_vehicle = 1;
  double payload_multiple = 2.0;
  double speed_kmh = 20.0;
  double ricean_k_v2i = 15.0;
  double ricean_k_v2v = 3.0;

  // Fixed physical parameters.
  int vehicles = 4;
  int bands = 4;
  double band_width_hz = 1e6;
  double v2i_power_dbm = 23.0;
  double noise_dbm = -114.0;
  int slots = 100;
  double slot_ms = 1.0;
  std::vector<double> power_levels_dbm{23.0, 15.0, 5.0, -100.0};
  double turn_probability = 0.4;
  double carrier_ghz = 2.0;

  // Reward.
  double reward_v2i = 0.1;
  double reward_v2v = 0.9;
  double upsilon = std::numeric_limits<double>::quiet_NaN();  // "auto"
  int calibration_episodes = 10;
  double calibration_margin = 1.1;

  // Networks and PPO.
  std::vector<int> hidden{500, 250, 120};
  double learning_rate = 3e-4;
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int updates = 10;
  int trajectories = 10;
  int minibatch_size = 0;
  double entropy_coef = 0.0;
  double reward_scale = 0.01;
  bool normalize_advantages = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Meta-training.
  std::string task_set = "243";  // 72 | 243 | 432 | desk | held-out
  int outer_loops = 200;
  int tasks_per_loop = 20;
  int inner_loops = 2;
  double meta_step = 1e-4;
  bool sample_with_replacement = false;
  int eval_every = 10;  // 0 disables the meta-training evaluation
  int eval_tasks = 10;
  int eval_episodes = 50;

  // Adaptation / evaluation / studies.
  std::string checkpoint;
  int adapt_loops = 2;  // N_L
  int matched_episodes = 3000;
  std::string study = "fig45";  // fig3 | fig45 | fig6 | fig7
  std::vector<std::string> policies{"meta-init", "rand-init", "matched", "mismatched",
                                    "random", "maxV2V"};
  std::vector<double> payload_multiples{1, 2, 3, 4, 5, 6};
  int study_seeds = 5;
  std::vector<std::string> compare_checkpoints;
  std::vector<int> distance_factors{0, 1, 3, 5};
  std::int64_t maxv2v_budget = 1'000'000;

  friend bool operator==(const RunConfig&, const RunConfig&);
};

/// Names of all configuration keys, in emission order.
std::vector<std::string> config_keys();

/// Parses config text on top of the defaults (or the desk profile when the
/// text or `desk` asks for it). Throws ConfigError with line information.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>",
                       bool desk = false);
RunConfig load_config(const std::filesystem::path& path, bool desk = false);

/// Sets one key from its textual value; throws ConfigError for unknown keys
/// (with a suggestion) or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its resolved value; parse_config(emit_config(c)) == c.
std::string emit_config(const RunConfig& cfg);

/// Desk-scale overrides applied to the defaults.
void apply_desk_profile(RunConfig& cfg);

/// Cross-field checks (N_task vs set size, ranges...). Throws ConfigError.
void validate(const RunConfig& cfg);

/// Closest known key within a small edit distance, or "".
std::string suggest_key(const std::string& key);
std::size_t edit_distance(const std::string& a, const std::string& b);

TaskConfig task_from(const RunConfig& cfg);
meta::FactorGrid grid_from(const RunConfig& cfg);
ppo::PpoConfig ppo_from(const RunConfig& cfg);
meta::MetaSchedule schedule_from(const RunConfig& cfg);

/// Structured record of a run: resolved config, its hash, derived seeds and
/// every model constant.
nlohmann::json make_manifest(const RunConfig& cfg, const std::vector<std::string>& outputs);
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace v2xmeta
