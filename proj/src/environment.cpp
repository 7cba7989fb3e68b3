#include "v2xmeta/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace v2xmeta {

namespace {

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

// ------------------------------------------------------------------ TaskConfig

void TaskConfig::validate() const {
  if (links_per_vehicle < 1) throw ConfigError("links_per_vehicle must be >= 1");
  if (vehicles < 2) throw ConfigError("at least two vehicles are required");
  if (links_per_vehicle > vehicles - 1)
    throw ConfigError("links_per_vehicle = " + std::to_string(links_per_vehicle) +
                      " needs more than " + std::to_string(vehicles) + " vehicles");
  if (bands < 1 || bands > vehicles)
    throw ConfigError("bands must lie in [1, vehicles]: one V2I vehicle per band");
  if (!(payload_bits > 0.0)) throw ConfigError("payload must be positive");
  const double units = payload_bits / kBitsPerPayloadUnit;
  if (std::abs(units - std::round(units)) > 1e-9)
    throw ConfigError("payload must be a multiple of 8480 bits (1060 bytes)");
  if (!(speed_kmh >= 0.0)) throw ConfigError("speed must be non-negative");
  if (!(ricean_k_v2i >= 0.0) || !(ricean_k_v2v >= 0.0))
    throw ConfigError("Ricean K-factors must be non-negative");
  if (slots < 1 || !(slot_s > 0.0)) throw ConfigError("invalid slot timing");
  if (!(band_width_hz > 0.0)) throw ConfigError("band width must be positive");
  if (!(weights.v2i >= 0.0) || !(weights.v2v >= 0.0))
    throw ConfigError("reward weights must be non-negative");
  if (calibration_episodes < 1) throw ConfigError("calibration_episodes must be >= 1");
  if (!std::isnan(upsilon) && !(upsilon >= 0.0))
    throw ConfigError("upsilon must be non-negative");
}

std::string TaskConfig::label() const {
  return "L" + std::to_string(links_per_vehicle) + "-P" + fmt_g(payload_multiple()) +
         "-v" + fmt_g(speed_kmh) + "-Ki" + fmt_g(ricean_k_v2i) + "-Kv" +
         fmt_g(ricean_k_v2v);
}

TaskConfig with_factors(TaskConfig base, int links_per_vehicle,
                        double payload_multiple, double speed_kmh, double k_v2i,
                        double k_v2v) {
  base.links_per_vehicle = links_per_vehicle;
  base.payload_bits = payload_multiple * kBitsPerPayloadUnit;
  base.speed_kmh = speed_kmh;
  base.ricean_k_v2i = k_v2i;
  base.ricean_k_v2v = k_v2v;
  return base;
}

// ------------------------------------------------------------------ link layer

LinkGains link_gains(const channel::GainTensors& gains,
                     std::span<const channel::LinkGeometry> v2v_links) {
  const int A = gains.bands;
  const int N = static_cast<int>(v2v_links.size());
  LinkGains g;
  g.bands = A;
  g.links = N;
  g.v2i.resize(static_cast<std::size_t>(A));
  g.v2v.resize(static_cast<std::size_t>(N * A));
  g.v2v_to_bs.resize(static_cast<std::size_t>(N * A));
  g.v2i_to_v2v.resize(static_cast<std::size_t>(A * N));
  g.cross.resize(static_cast<std::size_t>(N * N * A));
  for (int a = 0; a < A; ++a) g.v2i[a] = gains.to_bs_at(a, a);
  for (int n = 0; n < N; ++n) {
    const auto& link = v2v_links[n];
    for (int a = 0; a < A; ++a) {
      g.v2v[g.idx(n, a)] = gains.v2v_at(link.tx_id, link.rx_id, a);
      g.v2v_to_bs[g.idx(n, a)] = gains.to_bs_at(link.tx_id, a);
    }
  }
  for (int a = 0; a < A; ++a)
    for (int n = 0; n < N; ++n)
      g.v2i_to_v2v[static_cast<std::size_t>(a * N + n)] =
          gains.v2v_at(a, v2v_links[n].rx_id, a);
  for (int k = 0; k < N; ++k)
    for (int n = 0; n < N; ++n)
      for (int a = 0; a < A; ++a)
        g.cross[static_cast<std::size_t>((k * N + n) * A + a)] =
            gains.v2v_at(v2v_links[k].tx_id, v2v_links[n].rx_id, a);
  return g;
}

PhysicalLayer physical_layer(const TaskConfig& task) {
  return {dbm_to_mw(task.v2i_power_dbm), dbm_to_mw(task.noise_dbm),
          task.band_width_hz};
}

PowerAllocation allocate_powers(const TaskConfig& task, int links,
                                std::span<const ActionIndex> actions) {
  if (static_cast<int>(actions.size()) != links)
    throw ContractError("one action per V2V agent is required");
  PowerAllocation p{task.bands, links,
                    std::vector<double>(static_cast<std::size_t>(links * task.bands), 0.0)};
  for (int n = 0; n < links; ++n) {
    const ActionIndex act = actions[n];
    if (act.index < 0 || act.index >= task.action_count())
      throw ContractError("action index out of range");
    p.mw[static_cast<std::size_t>(n * task.bands + act.band())] =
        dbm_to_mw(task.power_levels_dbm[static_cast<std::size_t>(act.level())]);
  }
  return p;
}

std::vector<double> compute_sinr_v2i(const LinkGains& g, const PowerAllocation& p,
                                     const PhysicalLayer& phy) {
  std::vector<double> sinr(static_cast<std::size_t>(g.bands));
  for (int a = 0; a < g.bands; ++a) {
    double interference = 0.0;
    for (int n = 0; n < g.links; ++n) interference += p.at(n, a) * g.to_bs(n, a);
    sinr[a] = phy.v2i_power_mw * g.v2i[a] / (phy.noise_mw + interference);
  }
  return sinr;
}

std::vector<double> compute_interference_v2v(const LinkGains& g,
                                             const PowerAllocation& p,
                                             const PhysicalLayer& phy) {
  std::vector<double> out(static_cast<std::size_t>(g.links * g.bands));
  for (int n = 0; n < g.links; ++n) {
    for (int a = 0; a < g.bands; ++a) {
      double i = phy.v2i_power_mw * g.from_v2i(a, n);
      for (int k = 0; k < g.links; ++k)
        if (k != n) i += p.at(k, a) * g.between(k, n, a);
      out[g.idx(n, a)] = i;
    }
  }
  return out;
}

std::vector<double> compute_sinr_v2v(const LinkGains& g, const PowerAllocation& p,
                                     const PhysicalLayer& phy) {
  const auto interference = compute_interference_v2v(g, p, phy);
  std::vector<double> sinr(interference.size(), 0.0);
  for (int n = 0; n < g.links; ++n)
    for (int a = 0; a < g.bands; ++a) {
      const double power = p.at(n, a);
      if (power > 0.0)
        sinr[g.idx(n, a)] = power * g.own(n, a) / (phy.noise_mw + interference[g.idx(n, a)]);
    }
  return sinr;
}

double compute_reward(std::span<const double> v2i_rate_bps,
                      std::span<const double> v2v_rate_bps,
                      std::span<const double> remaining_bits,
                      const RewardWeights& weights, double upsilon,
                      double band_width_hz) {
  double v2i = 0.0;
  for (double c : v2i_rate_bps) v2i += c / band_width_hz;
  double v2v = 0.0;
  for (std::size_t n = 0; n < v2v_rate_bps.size(); ++n)
    v2v += remaining_bits[n] > 0.0 ? v2v_rate_bps[n] / band_width_hz : upsilon;
  return weights.v2i * v2i + weights.v2v * v2v;
}

std::vector<channel::LinkGeometry> nearest_neighbor_links(
    std::span<const channel::Vehicle> vehicles, int links_per_vehicle) {
  const int V = static_cast<int>(vehicles.size());
  if (links_per_vehicle > V - 1)
    throw ConfigError("not enough vehicles for " + std::to_string(links_per_vehicle) +
                      " neighbours each");
  std::vector<channel::LinkGeometry> links;
  links.reserve(static_cast<std::size_t>(V * links_per_vehicle));
  std::vector<int> order(static_cast<std::size_t>(V));
  for (int i = 0; i < V; ++i) {
    std::iota(order.begin(), order.end(), 0);
    auto d = [&](int j) { return channel::distance(vehicles[i].position, vehicles[j].position); };
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return d(x) < d(y); });
    int taken = 0;
    for (int j : order) {
      if (j == i) continue;
      links.push_back({i, j, d(j), channel::LinkKind::V2VDirect});
      if (++taken == links_per_vehicle) break;
    }
  }
  return links;
}

// ------------------------------------------------------------------ Environment

Environment::Environment(TaskConfig task, std::uint64_t seed) : task_(std::move(task)) {
  task_.validate();
  if (std::isnan(task_.upsilon)) task_.upsilon = calibrate_upsilon(task_);
  phy_ = physical_layer(task_);
  reset(seed);
}

std::vector<Observation> Environment::reset(std::uint64_t seed) {
  const SeedTree tree(seed);
  mobility_rng_ = tree.stream(streams::kMobility);
  shadowing_rng_ = tree.stream(streams::kShadowing);
  fading_rng_ = tree.stream(streams::kFading);

  state_ = ScenarioState{};
  state_.vehicles = channel::drop_vehicles(task_.grid, task_.vehicles,
                                           task_.speed_kmh, mobility_rng_);
  const auto V = static_cast<std::size_t>(task_.vehicles);
  state_.v2i_shadowing = channel::make_shadowing(channel::kV2IShadowing, V, shadowing_rng_);
  state_.v2v_shadowing = channel::make_shadowing(channel::kV2VShadowing, V * V, shadowing_rng_);
  // Pair shadowing is reciprocal.
  for (std::size_t i = 0; i < V; ++i) {
    state_.v2v_shadowing.values_db[i * V + i] = 0.0;
    for (std::size_t j = 0; j < i; ++j)
      state_.v2v_shadowing.values_db[i * V + j] = state_.v2v_shadowing.values_db[j * V + i];
  }
  pair_vehicles();
  refresh_slow_fading();
  start_episode_counters();
  draw_fast_fading();
  return observe_all();
}

std::vector<Observation> Environment::next_episode() {
  state_.vehicles = channel::step_mobility(task_.grid, state_.vehicles,
                                           task_.episode_duration_s(), mobility_rng_);
  const auto V = static_cast<std::size_t>(task_.vehicles);
  std::vector<double> moved(V);
  for (std::size_t v = 0; v < V; ++v)
    moved[v] = kmh_to_mps(task_.speed_kmh) * task_.episode_duration_s();
  state_.v2i_shadowing = channel::update_shadowing(std::move(state_.v2i_shadowing),
                                                   moved, shadowing_rng_);
  // Upper triangle evolves with the summed displacement of both ends.
  std::vector<double> pair_moved(V * V, 0.0);
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = i + 1; j < V; ++j) pair_moved[i * V + j] = moved[i] + moved[j];
  state_.v2v_shadowing = channel::update_shadowing(std::move(state_.v2v_shadowing),
                                                   pair_moved, shadowing_rng_);
  for (std::size_t i = 0; i < V; ++i) {
    state_.v2v_shadowing.values_db[i * V + i] = 0.0;
    for (std::size_t j = 0; j < i; ++j)
      state_.v2v_shadowing.values_db[i * V + j] = state_.v2v_shadowing.values_db[j * V + i];
  }
  const int episode = state_.episode + 1;
  pair_vehicles();
  refresh_slow_fading();
  start_episode_counters();
  state_.episode = episode;
  draw_fast_fading();
  return observe_all();
}

void Environment::pair_vehicles() {
  state_.v2v_links = nearest_neighbor_links(state_.vehicles, task_.links_per_vehicle);
}

void Environment::refresh_slow_fading() {
  state_.slow = channel::compute_slow_fading(state_.vehicles, state_.v2i_shadowing,
                                             state_.v2v_shadowing, task_.budget,
                                             task_.v2v_model);
}

void Environment::draw_fast_fading() {
  const auto tensors = channel::realize_gains(state_.slow, task_.bands, task_.ricean_k_v2i,
                                              task_.ricean_k_v2v, fading_rng_);
  state_.gains = link_gains(tensors, state_.v2v_links);
}

void Environment::start_episode_counters() {
  const auto N = static_cast<std::size_t>(agents());
  state_.slot = 0;
  state_.done = false;
  state_.remaining_bits.assign(N, task_.payload_bits);
  state_.delivered_bits.assign(N, 0.0);
  state_.measured_interference.assign(N * static_cast<std::size_t>(task_.bands),
                                      phy_.noise_mw);
}

StepResult Environment::step(std::span<const ActionIndex> actions) {
  if (state_.done) throw ContractError("step() called on a finished episode");
  const int N = agents();
  const int A = task_.bands;
  const auto powers = allocate_powers(task_, N, actions);
  const auto& g = state_.gains;

  StepResult r;
  r.v2i_sinr = compute_sinr_v2i(g, powers, phy_);
  const auto interference = compute_interference_v2v(g, powers, phy_);
  r.v2v_sinr.assign(interference.size(), 0.0);
  for (int n = 0; n < N; ++n)
    for (int a = 0; a < A; ++a) {
      const double p = powers.at(n, a);
      if (p > 0.0)
        r.v2v_sinr[g.idx(n, a)] = p * g.own(n, a) / (phy_.noise_mw + interference[g.idx(n, a)]);
    }

  r.v2i_rate_bps.resize(static_cast<std::size_t>(A));
  for (int a = 0; a < A; ++a)
    r.v2i_rate_bps[a] = phy_.band_width_hz * std::log2(1.0 + r.v2i_sinr[a]);
  r.v2v_rate_bps.assign(static_cast<std::size_t>(N), 0.0);
  r.delivered_bits.assign(static_cast<std::size_t>(N), 0.0);
  for (int n = 0; n < N; ++n) {
    double c = 0.0;
    for (int a = 0; a < A; ++a)
      c += phy_.band_width_hz * std::log2(1.0 + r.v2v_sinr[g.idx(n, a)]);
    r.v2v_rate_bps[n] = c;
    const double before = state_.remaining_bits[n];
    const double bits = c * task_.slot_s;
    state_.remaining_bits[n] = std::max(0.0, before - bits);
    r.delivered_bits[n] = before - state_.remaining_bits[n];
    state_.delivered_bits[n] += r.delivered_bits[n];
  }
  r.remaining_bits = state_.remaining_bits;
  r.reward = compute_reward(r.v2i_rate_bps, r.v2v_rate_bps, r.remaining_bits,
                            task_.weights, task_.upsilon, phy_.band_width_hz);

  for (std::size_t i = 0; i < interference.size(); ++i)
    state_.measured_interference[i] = phy_.noise_mw + interference[i];

  state_.slot += 1;
  state_.done = state_.slot >= task_.slots;
  r.done = state_.done;
  r.success.resize(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) r.success[n] = state_.remaining_bits[n] <= 0.0;
  if (!state_.done) draw_fast_fading();
  r.observations = observe_all();
  return r;
}

Observation Environment::observe(int agent) const {
  const int N = agents();
  if (agent < 0 || agent >= N) throw ContractError("agent id out of range");
  const int A = task_.bands;
  const auto& g = state_.gains;
  const auto& s = task_.scaling;
  Observation o;
  o.features.resize(static_cast<std::size_t>(task_.observation_size()));
  auto f = o.features.begin();
  for (int a = 0; a < A; ++a) *f++ = s.gain(g.own(agent, a));
  for (int a = 0; a < A; ++a) *f++ = s.gain(g.to_bs(agent, a));
  for (int a = 0; a < A; ++a) *f++ = s.gain(g.from_v2i(a, agent));
  for (int a = 0; a < A; ++a)
    *f++ = s.interference(state_.measured_interference[g.idx(agent, a)]);
  *f++ = state_.remaining_bits[agent] / task_.payload_bits;
  *f++ = static_cast<double>(task_.slots - state_.slot) / task_.slots;
  return o;
}

std::vector<Observation> Environment::observe_all() const {
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(agents()));
  for (int n = 0; n < agents(); ++n) out.push_back(observe(n));
  return out;
}

double calibrate_upsilon(const TaskConfig& task) {
  TaskConfig probe = task;
  probe.upsilon = 0.0;
  const SeedTree tree(fnv1a64("calibrate:" + task.label()));
  Environment env(probe, tree.derive("environment"));
  Rng rng = tree.stream(streams::kCalibration);
  std::uniform_int_distribution<int> pick(0, task.action_count() - 1);
  std::vector<ActionIndex> actions(static_cast<std::size_t>(env.agents()));
  double best = 0.0;
  for (int e = 0; e < task.calibration_episodes; ++e) {
    if (e > 0) env.next_episode();
    while (!env.state().done) {
      for (auto& a : actions) a.index = pick(rng);
      const auto r = env.step(actions);
      for (double c : r.v2v_rate_bps) best = std::max(best, c / task.band_width_hz);
    }
  }
  return task.calibration_margin * best;
}

// ------------------------------------------------------------------ CSV log

void write_episode_log_header(std::ostream& out, int bands) {
  out << "episode,slot,agent,band,power_dBm";
  for (int a = 0; a < bands; ++a) out << ",v2i_rate_bps_" << a;
  out << ",v2v_rate_bps,remaining_bits,reward\n";
}

void append_episode_log(std::ostream& out, int episode, int slot,
                        const TaskConfig& task, std::span<const ActionIndex> actions,
                        const StepResult& result) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t n = 0; n < actions.size(); ++n) {
    out << episode << ',' << slot << ',' << n << ',' << actions[n].band() << ','
        << num(task.power_levels_dbm[static_cast<std::size_t>(actions[n].level())]);
    for (double c : result.v2i_rate_bps) out << ',' << num(c);
    out << ',' << num(result.v2v_rate_bps[n]) << ',' << num(result.remaining_bits[n])
        << ',' << num(result.reward) << '\n';
  }
}

}  // namespace v2xmeta
