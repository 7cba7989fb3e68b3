#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2xmeta/channel.hpp"
#include "v2xmeta/rng.hpp"
#include "v2xmeta/units.hpp"

namespace v2xmeta {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr int kPowerLevels = 4;

struct RewardWeights {
  double v2i = 0.1;
  double v2v = 0.9;
};

/// Affine maps taking dB channel gains and dBm interference to roughly [-1, 1].
struct ObservationScaling {
  double gain_offset_db = 80.0;
  double gain_scale_db = 40.0;
  double interference_offset_dbm = 80.0;
  double interference_scale_db = 40.0;

  double gain(double linear) const {
    return (linear_to_db(linear) + gain_offset_db) / gain_scale_db;
  }
  double interference(double mw) const {
    return (mw_to_dbm(mw) + interference_offset_dbm) / interference_scale_db;
  }
};

/// One task of the distribution: five variable factors plus the fixed
/// physical and reward parameters.
struct TaskConfig {
  // Variable factors.
  int links_per_vehicle = 1;
  double payload_bits = 2.0 * kBitsPerPayloadUnit;
  double speed_kmh = 10.0;
  double ricean_k_v2i = 10.0;
  double ricean_k_v2v = 0.0;

  // Fixed physical parameters.
  int vehicles = 4;
  int bands = 4;
  double band_width_hz = 1e6;
  double v2i_power_dbm = 23.0;
  double noise_dbm = -114.0;
  int slots = 100;
  double slot_s = 1e-3;
  std::array<double, kPowerLevels> power_levels_dbm{23.0, 15.0, 5.0, -100.0};

  RewardWeights weights;
  /// Completion reward; NaN means "calibrate from random-policy rollouts".
  double upsilon = std::numeric_limits<double>::quiet_NaN();
  int calibration_episodes = 10;
  double calibration_margin = 1.1;

  channel::RoadGrid grid;
  channel::LinkBudget budget;
  channel::WinnerB1Los v2v_model;
  ObservationScaling scaling;

  int v2v_links() const { return vehicles * links_per_vehicle; }
  int action_count() const { return bands * kPowerLevels; }
  int observation_size() const { return 4 * bands + 2; }
  double payload_multiple() const { return payload_bits / kBitsPerPayloadUnit; }
  double episode_duration_s() const { return slots * slot_s; }

  /// Throws ConfigError when a constraint is violated.
  void validate() const;
  /// Compact identifier of the five variable factors.
  std::string label() const;
};

/// Task with its five factors replaced; fixed parameters untouched.
TaskConfig with_factors(TaskConfig base, int links_per_vehicle,
                        double payload_multiple, double speed_kmh,
                        double k_v2i, double k_v2v);

struct Observation {
  std::vector<double> features;
};

/// Joint sub-band and power-level choice: band = index / 4, level = index % 4.
struct ActionIndex {
  int index = 0;

  int band() const { return index / kPowerLevels; }
  int level() const { return index % kPowerLevels; }
  static ActionIndex from(int band, int level) {
    return ActionIndex{band * kPowerLevels + level};
  }
  friend bool operator==(ActionIndex, ActionIndex) = default;
};

/// Link-level linear gains of one slot, indexed by V2I link a (one per band)
/// and V2V link n.
struct LinkGains {
  int bands = 0;
  int links = 0;
  std::vector<double> v2i;         // [a]            V2I a -> BS on band a
  std::vector<double> v2v;         // [n*A + a]      tx_n -> rx_n
  std::vector<double> v2v_to_bs;   // [n*A + a]      tx_n -> BS
  std::vector<double> v2i_to_v2v;  // [a*N + n]      V2I tx a -> rx_n, band a
  std::vector<double> cross;       // [(k*N + n)*A + a]  tx_k -> rx_n

  double own(int n, int a) const { return v2v[idx(n, a)]; }
  double to_bs(int n, int a) const { return v2v_to_bs[idx(n, a)]; }
  double from_v2i(int a, int n) const {
    return v2i_to_v2v[static_cast<std::size_t>(a * links + n)];
  }
  double between(int k, int n, int a) const {
    return cross[static_cast<std::size_t>((k * links + n) * bands + a)];
  }
  std::size_t idx(int n, int a) const {
    return static_cast<std::size_t>(n * bands + a);
  }
};

/// Maps the vehicle-level tensors onto the V2V link set. V2I link a is
/// carried by vehicle a.
LinkGains link_gains(const channel::GainTensors& gains,
                     std::span<const channel::LinkGeometry> v2v_links);

/// Transmit powers in mW, [n*A + a]; zero on bands a link does not occupy.
struct PowerAllocation {
  int bands = 0;
  int links = 0;
  std::vector<double> mw;

  double at(int n, int a) const {
    return mw[static_cast<std::size_t>(n * bands + a)];
  }
};

struct PhysicalLayer {
  double v2i_power_mw = 0.0;
  double noise_mw = 0.0;
  double band_width_hz = 0.0;
};

PhysicalLayer physical_layer(const TaskConfig& task);
PowerAllocation allocate_powers(const TaskConfig& task, int links,
                                std::span<const ActionIndex> actions);

/// V2I SINR per band: P_v2i g_aB / (noise + sum_n P_n[a] g_nB[a]).
std::vector<double> compute_sinr_v2i(const LinkGains& g,
                                     const PowerAllocation& p,
                                     const PhysicalLayer& phy);

/// Interference at each V2V receiver on every band, [n*A + a].
std::vector<double> compute_interference_v2v(const LinkGains& g,
                                             const PowerAllocation& p,
                                             const PhysicalLayer& phy);

/// V2V SINR per link and band, [n*A + a]; zero where the link is silent.
std::vector<double> compute_sinr_v2v(const LinkGains& g,
                                     const PowerAllocation& p,
                                     const PhysicalLayer& phy);

/// Shared per-slot reward from rates (bps) and post-slot remaining payloads.
/// Rates are normalised by the band width before weighting.
double compute_reward(std::span<const double> v2i_rate_bps,
                      std::span<const double> v2v_rate_bps,
                      std::span<const double> remaining_bits,
                      const RewardWeights& weights, double upsilon,
                      double band_width_hz);

struct ScenarioState {
  std::vector<channel::Vehicle> vehicles;
  std::vector<channel::LinkGeometry> v2v_links;
  channel::ShadowingField v2i_shadowing;
  channel::ShadowingField v2v_shadowing;
  channel::SlowFading slow;
  LinkGains gains;  // current slot
  int episode = 0;
  int slot = 0;
  std::vector<double> remaining_bits;        // [n]
  std::vector<double> delivered_bits;        // [n], cumulative this episode
  std::vector<double> measured_interference; // [n*A + a], noise + I, last slot
  bool done = false;
};

struct StepResult {
  std::vector<Observation> observations;
  double reward = 0.0;
  std::vector<double> v2i_sinr;        // [a]
  std::vector<double> v2v_sinr;        // [n*A + a]
  std::vector<double> v2i_rate_bps;    // [a]
  std::vector<double> v2v_rate_bps;    // [n]
  std::vector<double> delivered_bits;  // [n], this slot
  std::vector<double> remaining_bits;  // [n], after this slot
  std::vector<bool> success;           // [n]
  bool done = false;
};

/// The spectrum-sharing MDP. One V2V link per agent; all agents act every
/// slot and share the scalar reward.
///
/// Slow fading (positions, path loss, shadowing, V2V pairing) is refreshed once
/// per episode; each episode spans exactly one slow-fading period. Fast fading
/// is redrawn every slot.
class Environment {
 public:
  /// Validates the task, calibrates the completion reward when unset and
  /// performs reset(seed).
  Environment(TaskConfig task, std::uint64_t seed);

  /// Fresh drop with its own random streams.
  std::vector<Observation> reset(std::uint64_t seed);
  /// Moves vehicles forward by one slow-fading period and starts a new episode
  /// on the evolved scenario.
  std::vector<Observation> next_episode();

  StepResult step(std::span<const ActionIndex> actions);

  Observation observe(int agent) const;
  std::vector<Observation> observe_all() const;

  const ScenarioState& state() const { return state_; }
  const TaskConfig& task() const { return task_; }
  const PhysicalLayer& phy() const { return phy_; }
  double upsilon() const { return task_.upsilon; }
  int agents() const { return task_.v2v_links(); }

 private:
  void pair_vehicles();
  void refresh_slow_fading();
  void draw_fast_fading();
  void start_episode_counters();

  TaskConfig task_;
  PhysicalLayer phy_;
  ScenarioState state_;
  Rng mobility_rng_;
  Rng shadowing_rng_;
  Rng fading_rng_;
};

/// Completion reward: margin x the largest per-slot, per-link normalised V2V
/// rate seen over random-policy episodes. Deterministic in the task's factors.
double calibrate_upsilon(const TaskConfig& task);

/// Nearest-neighbour V2V links: each vehicle links to its k closest vehicles.
/// Throws ConfigError when fewer than k other vehicles exist.
std::vector<channel::LinkGeometry> nearest_neighbor_links(
    std::span<const channel::Vehicle> vehicles, int links_per_vehicle);

// Episode log CSV:
// episode,slot,agent,band,power_dBm,v2i_rate_bps_0..A-1,v2v_rate_bps,remaining_bits,reward
void write_episode_log_header(std::ostream& out, int bands);
void append_episode_log(std::ostream& out, int episode, int slot,
                        const TaskConfig& task,
                        std::span<const ActionIndex> actions,
                        const StepResult& result);

}  // namespace v2xmeta
