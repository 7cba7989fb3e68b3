#include "v2xmeta/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace v2xmeta::eval {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::MetaInit: return "meta-init";
    case PolicyKind::RandInit: return "rand-init";
    case PolicyKind::Matched: return "matched";
    case PolicyKind::Mismatched: return "mismatched";
    case PolicyKind::Random: return "random";
    case PolicyKind::MaxV2V: return "maxV2V";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& text) {
  for (auto k : {PolicyKind::MetaInit, PolicyKind::RandInit, PolicyKind::Matched,
                 PolicyKind::Mismatched, PolicyKind::Random, PolicyKind::MaxV2V})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown policy '" + text +
                    "' (expected meta-init, rand-init, matched, mismatched, random or maxV2V)");
}

// ------------------------------------------------------------------ policies

std::vector<ActionIndex> GreedyPolicy::act(const Environment&, std::span<const Observation> obs,
                                           Rng&) {
  const Eigen::MatrixXd logits = nn::forward(actor_, nn::to_matrix(obs));
  std::vector<ActionIndex> out(obs.size());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    Eigen::Index best = 0;
    logits.col(n).maxCoeff(&best);  // first maximum on ties
    out[static_cast<std::size_t>(n)].index = static_cast<int>(best);
  }
  return out;
}

std::vector<ActionIndex> RandomPolicy::act(const Environment& env,
                                           std::span<const Observation>, Rng& rng) {
  return random_policy(env.agents(), env.task().action_count(), rng);
}

std::vector<ActionIndex> MaxV2VPolicy::act(const Environment& env,
                                           std::span<const Observation>, Rng&) {
  return centralized_max_v2v(env.state().gains, env.task(), env.phy(), budget_);
}

std::vector<ActionIndex> random_policy(int agents, int actions, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, actions - 1);
  std::vector<ActionIndex> out(static_cast<std::size_t>(agents));
  for (auto& a : out) a.index = pick(rng);
  return out;
}

double sum_v2v_rate(const LinkGains& gains, const TaskConfig& task, const PhysicalLayer& phy,
                    std::span<const ActionIndex> actions) {
  const auto p = allocate_powers(task, gains.links, actions);
  const auto sinr = compute_sinr_v2v(gains, p, phy);
  double total = 0.0;
  for (int n = 0; n < gains.links; ++n) {
    double c = 0.0;
    for (int a = 0; a < gains.bands; ++a) c += phy.band_width_hz * std::log2(1.0 + sinr[gains.idx(n, a)]);
    total += c;
  }
  return total;
}

std::vector<ActionIndex> centralized_max_v2v(const LinkGains& g, const TaskConfig& task,
                                             const PhysicalLayer& phy, std::int64_t budget) {
  const int N = g.links;
  const int A = g.bands;
  const int M = task.action_count();
  double space = std::pow(static_cast<double>(M), N);
  if (space > static_cast<double>(budget))
    throw BudgetExceeded("maxV2V search over " + std::to_string(M) + "^" + std::to_string(N) +
                         " joint actions exceeds the budget of " + std::to_string(budget));
  const auto total = static_cast<std::int64_t>(space);

  std::array<double, kPowerLevels> level_mw{};
  for (int l = 0; l < kPowerLevels; ++l) level_mw[l] = dbm_to_mw(task.power_levels_dbm[l]);

  std::vector<int> digits(static_cast<std::size_t>(N), 0);
  std::vector<int> best_digits = digits;
  double best = -1.0;
  for (std::int64_t j = 0; j < total; ++j) {
    // digits hold the joint index in base M, agent 0 most significant.
    double sum = 0.0;
    for (int n = 0; n < N; ++n) {
      const int band = digits[n] / kPowerLevels;
      const double power = level_mw[digits[n] % kPowerLevels];
      double interference = phy.v2i_power_mw * g.from_v2i(band, n);
      for (int k = 0; k < N; ++k)
        if (k != n && digits[k] / kPowerLevels == band)
          interference += level_mw[digits[k] % kPowerLevels] * g.between(k, n, band);
      const double sinr = power * g.own(n, band) / (phy.noise_mw + interference);
      double c = 0.0;
      for (int a = 0; a < A; ++a)
        c += phy.band_width_hz * std::log2(1.0 + (a == band ? sinr : 0.0));
      sum += c;
    }
    if (sum > best) {
      best = sum;
      best_digits = digits;
    }
    for (int n = N - 1; n >= 0; --n) {
      if (++digits[n] < M) break;
      digits[n] = 0;
    }
  }
  std::vector<ActionIndex> out(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) out[n].index = best_digits[n];
  return out;
}

// ------------------------------------------------------------------ metrics

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= static_cast<double>(values.size() - 1);
    s.std_error = std::sqrt(var / values.size());
    s.ci95 = 1.96 * s.std_error;
  }
  return s;
}

void EvalReport::finalize() {
  std::vector<double> v2i, frac, rew;
  std::size_t hits = 0, links = 0;
  for (const auto& r : rows) {
    v2i.push_back(r.v2i_sum_rate_bps);
    rew.push_back(r.cumulative_reward);
    const auto h = static_cast<std::size_t>(std::count(r.success.begin(), r.success.end(), 1));
    hits += h;
    links += r.success.size();
    frac.push_back(r.success.empty() ? 0.0 : static_cast<double>(h) / r.success.size());
  }
  v2i_sum_rate = summarize(v2i);
  success = summarize(frac);
  reward = summarize(rew);
  success_probability = links ? static_cast<double>(hits) / static_cast<double>(links) : 0.0;
}

EvalReport evaluate(Policy& policy, const TaskConfig& task, int n_episodes, std::uint64_t seed,
                    std::ostream* episode_log) {
  if (n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  const SeedTree tree(seed);
  Environment env(task, tree.derive("environment"));
  Rng rng = tree.stream(streams::kPolicy);
  EvalReport report;
  report.policy = policy.name();
  report.task = task.label();
  report.seed = seed;
  for (int e = 0; e < n_episodes; ++e) {
    if (e > 0) env.next_episode();
    EpisodeRow row;
    row.episode = e;
    auto obs = env.observe_all();
    StepResult r;
    int slots = 0;
    do {
      const auto actions = policy.act(env, obs, rng);
      const int slot = env.state().slot;
      r = env.step(actions);
      if (episode_log) append_episode_log(*episode_log, e, slot, task, actions, r);
      row.cumulative_reward += r.reward;
      for (double c : r.v2i_rate_bps) row.v2i_sum_rate_bps += c;
      ++slots;
      obs = std::move(r.observations);
    } while (!r.done);
    row.v2i_sum_rate_bps /= slots;
    for (bool s : r.success) row.success.push_back(s ? 1 : 0);
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

EvalReport merge(std::span<const EvalReport> reports) {
  EvalReport out;
  if (reports.empty()) return out;
  out.policy = reports.front().policy;
  out.task = reports.front().task;
  out.seed = reports.front().seed;
  out.seeds = 0;
  for (const auto& r : reports) {
    out.seeds += r.seeds;
    for (auto row : r.rows) {
      row.episode = static_cast<int>(out.rows.size());
      out.rows.push_back(std::move(row));
    }
  }
  out.finalize();
  return out;
}

// ------------------------------------------------------------------ adaptation

meta::InnerResult adapt(const nn::Checkpoint& init, const TaskConfig& task, int rounds,
                        const ppo::PpoConfig& config, std::uint64_t seed,
                        const meta::RoundHook& on_round, const ppo::StepHook& on_step) {
  const auto& a = init.actor.architecture();
  const auto& c = init.critic.architecture();
  if (a.inputs != task.observation_size() || a.outputs != task.action_count() ||
      c.inputs != task.observation_size() || c.outputs != 1)
    throw ContractError("checkpoint architecture does not match the task (" +
                        std::to_string(a.inputs) + " -> " + std::to_string(a.outputs) +
                        " vs " + std::to_string(task.observation_size()) + " -> " +
                        std::to_string(task.action_count()) + ")");
  return meta::inner_adapt(task, init.actor, init.critic, rounds, config, seed, on_round,
                           on_step);
}

nn::Checkpoint random_init(const TaskConfig& task, std::uint64_t seed,
                           const std::vector<int>& hidden) {
  meta::MetaSchedule shape;
  shape.hidden = hidden;
  const auto s = meta::initial_state(task, seed, shape);
  nn::Checkpoint c;
  c.kind = "rand-init";
  c.actor = s.actor;
  c.critic = s.critic;
  c.metadata = {{"seed", seed}};
  return c;
}

nn::Checkpoint train_policy(const TaskConfig& task, int episodes, const ppo::PpoConfig& config,
                            std::uint64_t seed, const std::vector<int>& hidden) {
  const SeedTree tree(seed);
  const auto init = random_init(task, tree.derive(streams::kInit), hidden);
  const int rounds = (episodes + config.trajectories - 1) / config.trajectories;
  auto r = meta::inner_adapt(task, init.actor, init.critic, rounds, config,
                             tree.derive("train"));
  nn::Checkpoint c;
  c.kind = "policy";
  c.actor = std::move(r.actor);
  c.critic = std::move(r.critic);
  c.metadata = {{"task", task.label()}, {"episodes", rounds * config.trajectories},
                {"seed", seed}};
  return c;
}

TaskConfig mismatched_task(const TaskConfig& test, const meta::FactorGrid& grid) {
  auto farthest = [](const auto& values, double x) {
    if (values.empty()) throw ConfigError("mismatched_task: empty grid factor");
    auto best = values.front();
    for (auto v : values)
      if (std::abs(static_cast<double>(v) - x) > std::abs(static_cast<double>(best) - x)) best = v;
    return best;
  };
  return with_factors(test, farthest(grid.links, test.links_per_vehicle),
                      farthest(grid.payload_multiples, test.payload_multiple()),
                      farthest(grid.speeds_kmh, test.speed_kmh),
                      farthest(grid.k_v2i, test.ricean_k_v2i),
                      farthest(grid.k_v2v, test.ricean_k_v2v));
}

TaskConfig distance_task(const meta::FactorGrid& grid, int factors, const TaskConfig& base) {
  if (factors < 0 || factors > 5) throw ConfigError("distance_task: factors must lie in [0, 5]");
  if (grid.size() == 0) throw ConfigError("distance_task: empty grid");
  auto beyond = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi > *lo ? *hi + (*hi - *lo) / 2.0 : *hi * 1.5 + 1.0;
  };
  int links = grid.links.front();
  double speed = grid.speeds_kmh.front();
  double payload = grid.payload_multiples.front();
  double k_v2i = grid.k_v2i.front();
  double k_v2v = grid.k_v2v.front();
  if (factors >= 1) payload = beyond(grid.payload_multiples);
  if (factors >= 2) speed = beyond(grid.speeds_kmh);
  if (factors >= 3) k_v2v = beyond(grid.k_v2v);
  if (factors >= 4) k_v2i = beyond(grid.k_v2i);
  if (factors >= 5) {
    links = 0;
    for (int l = 1; l < base.vehicles && links == 0; ++l)
      if (std::find(grid.links.begin(), grid.links.end(), l) == grid.links.end()) links = l;
    if (links == 0)
      throw ConfigError("distance_task: every feasible link count is on the grid");
  }
  return with_factors(base, links, payload, speed, k_v2i, k_v2v);
}

AdaptationCurve adaptation_curve(const nn::Checkpoint& init, const TaskConfig& task, int rounds,
                                 const ppo::PpoConfig& config, std::uint64_t seed) {
  const auto r = adapt(init, task, rounds, config, seed);
  AdaptationCurve curve;
  for (const auto& e : r.episodes) {
    curve.reward.push_back(e.cumulative_reward);
    curve.v2i_sum_rate_bps.push_back(e.v2i_sum_rate_bps);
    curve.success_probability.push_back(e.success_probability());
  }
  return curve;
}

int episodes_to_fraction(std::span<const double> per_episode, int block, double fraction,
                         int final_window) {
  const auto n = static_cast<int>(per_episode.size());
  if (block < 1 || final_window < 1 || final_window > n)
    throw ConfigError("episodes_to_fraction: invalid window");
  double final_mean = 0.0;
  for (int i = n - final_window; i < n; ++i) final_mean += per_episode[i];
  final_mean /= final_window;
  const double target = fraction * final_mean;
  for (int start = 0; start + block <= n; start += block) {
    double m = 0.0;
    for (int i = start; i < start + block; ++i) m += per_episode[i];
    m /= block;
    if (m >= target) return start + block;
  }
  return n;
}

}  // namespace v2xmeta::eval
