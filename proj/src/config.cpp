#include "v2xmeta/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "v2xmeta/csv.hpp"
#include "v2xmeta/evaluation.hpp"

namespace v2xmeta {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Shortest decimal form that reads back bit-identically.
std::string text_of(double v) {
  if (std::isnan(v)) return "auto";
  return format_number(v);
}
std::string text_of(int v) { return std::to_string(v); }
std::string text_of(std::int64_t v) { return std::to_string(v); }
std::string text_of(std::uint64_t v) { return std::to_string(v); }
std::string text_of(bool v) { return v ? "true" : "false"; }
std::string text_of(const std::string& v) { return v; }
template <class T>
std::string text_of(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + text_of(v[i]);
  return out;
}

template <class Int>
Int parse_integer(const std::string& s) {
  Int v{};
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

void parse_into(const std::string& s, int& v) { v = parse_integer<int>(s); }
void parse_into(const std::string& s, std::int64_t& v) { v = parse_integer<std::int64_t>(s); }
void parse_into(const std::string& s, std::uint64_t& v) { v = parse_integer<std::uint64_t>(s); }
void parse_into(const std::string& s, double& v) {
  const auto t = trim(s);
  if (t == "auto" || t == "nan") {
    v = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  char* end = nullptr;
  v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw ConfigError("expected a number, got '" + s + "'");
}
void parse_into(const std::string& s, bool& v) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes") v = true;
  else if (t == "false" || t == "0" || t == "no") v = false;
  else throw ConfigError("expected true or false, got '" + s + "'");
}
void parse_into(const std::string& s, std::string& v) { v = trim(s); }
template <class T>
void parse_into(const std::string& s, std::vector<T>& v) {
  v.clear();
  for (const auto& item : split_list(s)) {
    T x{};
    parse_into(item, x);
    v.push_back(x);
  }
}

struct Field {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Field field(const char* name, T RunConfig::*member) {
  return {name, [member](const RunConfig& c) { return text_of(c.*member); },
          [member](RunConfig& c, const std::string& s) { parse_into(s, c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field("mode", &RunConfig::mode),
      field("seed", &RunConfig::seed),
      field("jobs", &RunConfig::jobs),
      field("out", &RunConfig::out),
      field("desk", &RunConfig::desk),
      field("links_per_vehicle", &RunConfig::links_per_vehicle),
      field("payload_multiple", &RunConfig::payload_multiple),
      field("speed_kmh", &RunConfig::speed_kmh),
      field("ricean_k_v2i", &RunConfig::ricean_k_v2i),
      field("ricean_k_v2v", &RunConfig::ricean_k_v2v),
      field("vehicles", &RunConfig::vehicles),
      field("bands", &RunConfig::bands),
      field("band_width_hz", &RunConfig::band_width_hz),
      field("v2i_power_dbm", &RunConfig::v2i_power_dbm),
      field("noise_dbm", &RunConfig::noise_dbm),
      field("slots", &RunConfig::slots),
      field("slot_ms", &RunConfig::slot_ms),
      field("power_levels_dbm", &RunConfig::power_levels_dbm),
      field("turn_probability", &RunConfig::turn_probability),
      field("carrier_ghz", &RunConfig::carrier_ghz),
      field("reward_v2i", &RunConfig::reward_v2i),
      field("reward_v2v", &RunConfig::reward_v2v),
      field("upsilon", &RunConfig::upsilon),
      field("calibration_episodes", &RunConfig::calibration_episodes),
      field("calibration_margin", &RunConfig::calibration_margin),
      field("hidden", &RunConfig::hidden),
      field("learning_rate", &RunConfig::learning_rate),
      field("clip", &RunConfig::clip),
      field("gamma", &RunConfig::gamma),
      field("gae_lambda", &RunConfig::gae_lambda),
      field("updates", &RunConfig::updates),
      field("trajectories", &RunConfig::trajectories),
      field("minibatch_size", &RunConfig::minibatch_size),
      field("entropy_coef", &RunConfig::entropy_coef),
      field("reward_scale", &RunConfig::reward_scale),
      field("normalize_advantages", &RunConfig::normalize_advantages),
      field("adam_beta1", &RunConfig::adam_beta1),
      field("adam_beta2", &RunConfig::adam_beta2),
      field("adam_epsilon", &RunConfig::adam_epsilon),
      field("task_set", &RunConfig::task_set),
      field("outer_loops", &RunConfig::outer_loops),
      field("tasks_per_loop", &RunConfig::tasks_per_loop),
      field("inner_loops", &RunConfig::inner_loops),
      field("meta_step", &RunConfig::meta_step),
      field("sample_with_replacement", &RunConfig::sample_with_replacement),
      field("eval_every", &RunConfig::eval_every),
      field("eval_tasks", &RunConfig::eval_tasks),
      field("eval_episodes", &RunConfig::eval_episodes),
      field("checkpoint", &RunConfig::checkpoint),
      field("adapt_loops", &RunConfig::adapt_loops),
      field("matched_episodes", &RunConfig::matched_episodes),
      field("study", &RunConfig::study),
      field("policies", &RunConfig::policies),
      field("payload_multiples", &RunConfig::payload_multiples),
      field("study_seeds", &RunConfig::study_seeds),
      field("compare_checkpoints", &RunConfig::compare_checkpoints),
      field("distance_factors", &RunConfig::distance_factors),
      field("maxv2v_budget", &RunConfig::maxv2v_budget),
  };
  return all;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

bool operator==(const RunConfig& a, const RunConfig& b) { return emit_config(a) == emit_config(b); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  return out;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(3, key.size() / 3) + 1;
  for (const auto& f : fields()) {
    const auto d = edit_distance(key, f.name);
    if (d < best_d) {
      best_d = d;
      best = f.name;
    }
  }
  return best;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) {
    const auto hint = suggest_key(key);
    throw ConfigError("unknown key '" + key + "'" +
                      (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
  }
  try {
    f->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void apply_desk_profile(RunConfig& cfg) {
  cfg.desk = true;
  cfg.task_set = "desk";
  cfg.outer_loops = 60;
  cfg.tasks_per_loop = 8;
  cfg.matched_episodes = 1000;
  cfg.eval_every = 10;
  cfg.eval_tasks = 4;
  cfg.eval_episodes = 10;
  cfg.study_seeds = 3;
}

RunConfig parse_config(const std::string& text, const std::string& source, bool desk) {
  struct Entry {
    int line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::stringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line_no) + ": missing key");
    entries.push_back({line_no, std::move(key), trim(line.substr(eq + 1))});
  }

  RunConfig cfg;
  bool want_desk = desk;
  for (const auto& e : entries)
    if (e.key == "desk") {
      bool v = false;
      try {
        parse_into(e.value, v);
      } catch (const ConfigError& err) {
        throw ConfigError(source + ":" + std::to_string(e.line) + ": desk: " + err.what());
      }
      want_desk = want_desk || v;
    }
  if (want_desk) apply_desk_profile(cfg);
  for (const auto& e : entries) {
    try {
      set_config_value(cfg, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(source + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
  if (desk) cfg.desk = true;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool desk) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), desk);
}

std::string emit_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
  return out;
}

void validate(const RunConfig& cfg) {
  static const std::vector<std::string> modes{"meta-train", "adapt", "evaluate", "study",
                                              "calibrate"};
  if (std::find(modes.begin(), modes.end(), cfg.mode) == modes.end())
    throw ConfigError("mode: unknown mode '" + cfg.mode + "'");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (cfg.power_levels_dbm.size() != static_cast<std::size_t>(kPowerLevels))
    throw ConfigError("power_levels_dbm must list exactly " + std::to_string(kPowerLevels) +
                      " levels");
  if (cfg.hidden.empty() ||
      std::any_of(cfg.hidden.begin(), cfg.hidden.end(), [](int h) { return h < 1; }))
    throw ConfigError("hidden must list positive layer sizes");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(cfg.clip > 0.0 && cfg.clip < 1.0)) throw ConfigError("clip must lie in (0, 1)");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda <= 1.0))
    throw ConfigError("gae_lambda must lie in [0, 1]");
  if (cfg.updates < 0 || cfg.trajectories < 1 || cfg.minibatch_size < 0)
    throw ConfigError("updates >= 0, trajectories >= 1 and minibatch_size >= 0 are required");
  if (!(cfg.reward_scale > 0.0)) throw ConfigError("reward_scale must be positive");
  if (cfg.outer_loops < 0 || cfg.inner_loops < 0 || cfg.tasks_per_loop < 1)
    throw ConfigError("outer_loops >= 0, inner_loops >= 0 and tasks_per_loop >= 1 are required");
  if (cfg.adapt_loops < 0) throw ConfigError("adapt_loops must be >= 0");
  if (cfg.eval_every < 0 || cfg.eval_tasks < 1 || cfg.eval_episodes < 1)
    throw ConfigError("eval_every >= 0, eval_tasks >= 1 and eval_episodes >= 1 are required");
  if (cfg.study_seeds < 1) throw ConfigError("study_seeds must be >= 1");
  static const std::vector<std::string> studies{"fig3", "fig45", "fig6", "fig7"};
  if (std::find(studies.begin(), studies.end(), cfg.study) == studies.end())
    throw ConfigError("study: unknown study '" + cfg.study + "' (fig3, fig45, fig6 or fig7)");
  for (const auto& p : cfg.policies) eval::parse_policy_kind(p);
  for (int k : cfg.distance_factors)
    if (k < 0 || k > 5) throw ConfigError("distance_factors must lie in [0, 5]");

  task_from(cfg).validate();
  const auto grid = grid_from(cfg);
  if (grid.size() == 0) throw ConfigError("task set '" + cfg.task_set + "' is empty");
  if (!cfg.sample_with_replacement &&
      static_cast<std::size_t>(cfg.tasks_per_loop) > grid.size())
    throw ConfigError("tasks_per_loop = " + std::to_string(cfg.tasks_per_loop) +
                      " exceeds the " + std::to_string(grid.size()) + "-task set '" +
                      cfg.task_set + "'");
  for (int l : grid.links)
    if (l >= cfg.vehicles)
      throw ConfigError("task set needs " + std::to_string(l) + " neighbours but only " +
                        std::to_string(cfg.vehicles) + " vehicles exist");
}

TaskConfig task_from(const RunConfig& cfg) {
  TaskConfig t;
  t.vehicles = cfg.vehicles;
  t.bands = cfg.bands;
  t.band_width_hz = cfg.band_width_hz;
  t.v2i_power_dbm = cfg.v2i_power_dbm;
  t.noise_dbm = cfg.noise_dbm;
  t.slots = cfg.slots;
  t.slot_s = cfg.slot_ms * 1e-3;
  if (cfg.power_levels_dbm.size() == static_cast<std::size_t>(kPowerLevels))
    std::copy(cfg.power_levels_dbm.begin(), cfg.power_levels_dbm.end(),
              t.power_levels_dbm.begin());
  t.grid.turn_probability = cfg.turn_probability;
  t.v2v_model.carrier_ghz = cfg.carrier_ghz;
  t.weights = {cfg.reward_v2i, cfg.reward_v2v};
  t.upsilon = cfg.upsilon;
  t.calibration_episodes = cfg.calibration_episodes;
  t.calibration_margin = cfg.calibration_margin;
  return with_factors(t, cfg.links_per_vehicle, cfg.payload_multiple, cfg.speed_kmh,
                      cfg.ricean_k_v2i, cfg.ricean_k_v2v);
}

meta::FactorGrid grid_from(const RunConfig& cfg) {
  if (cfg.task_set == "desk") return meta::desk_grid();
  if (cfg.task_set == "held-out") return meta::held_out_grid();
  if (cfg.task_set == "desk-8") return meta::sub_grid(meta::desk_grid(), {true, false, true, false, true});
  int n = 0;
  try {
    n = std::stoi(cfg.task_set);
  } catch (const std::exception&) {
    throw ConfigError("task_set: unknown task set '" + cfg.task_set +
                      "' (72, 243, 432, desk, desk-8 or held-out)");
  }
  return meta::training_grid(n);
}

ppo::PpoConfig ppo_from(const RunConfig& cfg) {
  ppo::PpoConfig p;
  p.gamma = cfg.gamma;
  p.gae_lambda = cfg.gae_lambda;
  p.clip = cfg.clip;
  p.learning_rate = cfg.learning_rate;
  p.updates = cfg.updates;
  p.trajectories = cfg.trajectories;
  p.minibatch_size = cfg.minibatch_size;
  p.entropy_coef = cfg.entropy_coef;
  p.normalize_advantages = cfg.normalize_advantages;
  p.reward_scale = cfg.reward_scale;
  p.adam_beta1 = cfg.adam_beta1;
  p.adam_beta2 = cfg.adam_beta2;
  p.adam_epsilon = cfg.adam_epsilon;
  return p;
}

meta::MetaSchedule schedule_from(const RunConfig& cfg) {
  meta::MetaSchedule s;
  s.outer_loops = cfg.outer_loops;
  s.tasks_per_loop = cfg.tasks_per_loop;
  s.inner_loops = cfg.inner_loops;
  s.meta_step = cfg.meta_step;
  s.with_replacement = cfg.sample_with_replacement;
  s.jobs = cfg.jobs;
  s.ppo = ppo_from(cfg);
  s.hidden = cfg.hidden;
  return s;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(emit_config(cfg)); }

nlohmann::json make_manifest(const RunConfig& cfg, const std::vector<std::string>& outputs) {
  using nlohmann::json;
  const auto task = task_from(cfg);
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));

  json config = json::object();
  for (const auto& f : fields()) config[f.name] = f.get(cfg);

  const SeedTree tree(cfg.seed);
  json seeds = {{"master", cfg.seed}};
  for (auto name : {streams::kMobility, streams::kShadowing, streams::kFading, streams::kPolicy,
                    streams::kTasks, streams::kInit, streams::kCalibration, streams::kMinibatch})
    seeds[std::string(name)] = tree.derive(name);

  const auto& m = task.v2v_model;
  const auto& b = task.budget;
  const auto& g = task.grid;
  const auto& s = task.scaling;
  json constants = {
      {"path_loss_v2i", "128.1 + 37.6 log10(d_km), 3-D distance"},
      {"path_loss_v2v",
       {{"model", "WINNER+ B1 LOS dual slope"},
        {"near", "22.7 log10(d) + 41 + 20 log10(fc/5)"},
        {"far", "40 log10(d) + 9.45 - 17.3 log10(h'tx) - 17.3 log10(h'rx) + 2.7 log10(fc/5)"},
        {"carrier_ghz", m.carrier_ghz},
        {"antenna_height_m", m.tx_height_m},
        {"height_offset_m", m.height_offset_m},
        {"breakpoint_m", m.breakpoint_m()},
        {"min_distance_m", m.min_distance_m}}},
      {"shadowing",
       {{"v2i_std_db", channel::kV2IShadowing.std_db},
        {"v2i_decorrelation_m", channel::kV2IShadowing.decorrelation_m},
        {"v2v_std_db", channel::kV2VShadowing.std_db},
        {"v2v_decorrelation_m", channel::kV2VShadowing.decorrelation_m},
        {"rule", "s' = rho s + sqrt(1 - rho^2) X, rho = exp(-dx / d_corr)"}}},
      {"fast_fading", "Ricean power gain, unit mean, i.i.d. per link, band and slot"},
      {"link_budget",
       {{"bs_position_m", {b.bs_position.x, b.bs_position.y}},
        {"bs_height_m", b.bs_height_m},
        {"vehicle_height_m", b.vehicle_height_m},
        {"bs_antenna_gain_db", b.bs_antenna_gain_db},
        {"bs_noise_figure_db", b.bs_noise_figure_db},
        {"vehicle_antenna_gain_db", b.vehicle_antenna_gain_db},
        {"vehicle_noise_figure_db", b.vehicle_noise_figure_db}}},
      {"road_grid",
       {{"width_m", g.width_m},
        {"height_m", g.height_m},
        {"blocks", {g.blocks_x, g.blocks_y}},
        {"inset_m", g.inset_m},
        {"lane_offset_m", g.lane_offset_m},
        {"turn_probability", g.turn_probability},
        {"boundary", "wrap"}}},
      {"observation_scaling",
       {{"gain_offset_db", s.gain_offset_db},
        {"gain_scale_db", s.gain_scale_db},
        {"interference_offset_dbm", s.interference_offset_dbm},
        {"interference_scale_db", s.interference_scale_db}}},
      {"payload_unit_bits", kBitsPerPayloadUnit},
      {"episode", "one slow-fading period (T slots); ends only at t = T"},
      {"init", "He-uniform hidden layers, U(-0.01, 0.01) output layer, zero biases"},
      {"advantage_normalization", cfg.normalize_advantages},
      {"evaluation", "greedy argmax actions"},
      {"held_out_grid", "links {1,2}, speed {15,25}, payload {3,5}, K_v2i {12.5,17.5}, K_v2v {4.5}"}};

  return {{"program", "v2xmeta"},
          {"version", V2XMETA_VERSION},
          {"mode", cfg.mode},
          {"config_hash", hash},
          {"config", config},
          {"seeds", seeds},
          {"constants", constants},
          {"outputs", outputs}};
}

}  // namespace v2xmeta
