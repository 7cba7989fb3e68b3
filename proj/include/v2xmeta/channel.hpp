#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "v2xmeta/rng.hpp"

// Urban Manhattan mobility and the channel-gain stack: path loss, correlated
// log-normal shadowing and Ricean fast fading.
namespace v2xmeta::channel {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(Vec2 a, Vec2 b);

enum class Heading : std::uint8_t { North, East, South, West };

Vec2 unit_vector(Heading h);
Heading turn_left(Heading h);
Heading turn_right(Heading h);

struct Vehicle {
  int id = 0;
  Vec2 position;
  Heading heading = Heading::North;
  double speed_kmh = 0.0;
};

/// Bidirectional 3x3-block road grid laid over the simulation area.
///
/// Road centerlines are inset from the area edge so that both lanes of the
/// boundary roads stay inside the area. Traffic keeps to the right: northbound
/// at x = road + offset, southbound at x = road - offset, eastbound at
/// y = road - offset, westbound at y = road + offset. Vehicles that run off a
/// boundary road without turning wrap to the opposite boundary road.
struct RoadGrid {
  double width_m = 375.0;
  double height_m = 649.0;
  int blocks_x = 3;
  int blocks_y = 3;
  double inset_m = 3.5;
  double lane_offset_m = 1.75;
  double turn_probability = 0.4;

  std::vector<double> vertical_roads() const;    // x of north-south centerlines
  std::vector<double> horizontal_roads() const;  // y of east-west centerlines

  /// Fixed lane coordinate (x for N/S headings, y for E/W) on a road.
  double lane_coordinate(Heading h, double road_center) const;

  bool inside(Vec2 p) const;
  bool on_grid(const Vehicle& v, double tol = 1e-6) const;
};

enum class LinkKind : std::uint8_t { V2IDirect, V2VDirect, V2VToBs, V2IToV2V };

inline constexpr int kBaseStation = -1;

struct LinkGeometry {
  int tx_id = 0;
  int rx_id = kBaseStation;
  double distance_m = 0.0;
  LinkKind kind = LinkKind::V2VDirect;
};

/// Uniform drop: random lane, uniform position along it.
std::vector<Vehicle> drop_vehicles(const RoadGrid& grid, int count,
                                   double speed_kmh, Rng& rng);

/// Advances every vehicle speed*dt along its lane, turning at intersections
/// with the grid's turn probability (left/right equally likely).
std::vector<Vehicle> step_mobility(const RoadGrid& grid,
                                   std::vector<Vehicle> vehicles, double dt_s,
                                   Rng& rng);

// ---------------------------------------------------------------- path loss

/// 128.1 + 37.6 log10(d), d in km. Throws std::domain_error for d <= 0.
double path_loss_v2i_db(double distance_km);

/// WINNER+ B1 Manhattan LOS dual-slope model.
///
///   d < d_bp : 22.7 log10(d) + 41.0 + 20 log10(fc/5)
///   d >= d_bp: 40 log10(d) + 9.45 - 17.3 log10(h'_tx) - 17.3 log10(h'_rx)
///              + 2.7 log10(fc/5)
///   d_bp = 4 h'_tx h'_rx fc / c,  h' = h - 1 m (effective antenna height)
///
/// fc in GHz, d in metres, clamped below at min_distance_m. With 1.5 m
/// antennas at 2 GHz the breakpoint sits at 6.67 m and the two branches meet
/// within 0.02 dB.
struct WinnerB1Los {
  double carrier_ghz = 2.0;
  double tx_height_m = 1.5;
  double rx_height_m = 1.5;
  double height_offset_m = 1.0;
  double min_distance_m = 3.0;

  double breakpoint_m() const;
  double near_branch_db(double distance_m) const;
  double far_branch_db(double distance_m) const;
  double operator()(double distance_m) const;
};

double path_loss_v2v_db(double distance_m, const WinnerB1Los& model = {});
double path_loss_v2v_db(Vec2 tx, Vec2 rx, const WinnerB1Los& model = {});

// ---------------------------------------------------------------- shadowing

struct ShadowingParams {
  double std_db = 0.0;
  double decorrelation_m = 1.0;
};

inline constexpr ShadowingParams kV2IShadowing{8.0, 50.0};
inline constexpr ShadowingParams kV2VShadowing{3.0, 10.0};

/// Per-link log-normal shadowing values (dB) evolving as a Gauss-Markov
/// process in travelled distance.
struct ShadowingField {
  ShadowingParams params;
  std::vector<double> values_db;
};

/// Stationary initial draw, every entry ~ N(0, std^2).
ShadowingField make_shadowing(ShadowingParams params, std::size_t links,
                              Rng& rng);

double shadowing_correlation(double displacement_m, const ShadowingParams& p);

/// s' = rho s + sqrt(1 - rho^2) X, X ~ N(0, std^2), rho = exp(-dx / d_corr).
/// One displacement per entry.
ShadowingField update_shadowing(ShadowingField field,
                                std::span<const double> displacement_m,
                                Rng& rng);
ShadowingField update_shadowing(ShadowingField field, double displacement_m,
                                Rng& rng);

// ---------------------------------------------------------------- fast fading

struct FadingSample {
  double power = 1.0;  // |c|^2, unit mean
  double k_factor = 0.0;
};

/// Unit-power Ricean power gain; K = 0 is Rayleigh. Throws std::domain_error
/// for negative K.
FadingSample sample_fading(double k_factor, Rng& rng);

double ricean_power_variance(double k_factor);

// ---------------------------------------------------------------- link budget

struct LinkBudget {
  Vec2 bs_position{187.5, 324.5};
  double bs_height_m = 25.0;
  double vehicle_height_m = 1.5;
  double bs_antenna_gain_db = 8.0;
  double bs_noise_figure_db = 5.0;
  double vehicle_antenna_gain_db = 3.0;
  double vehicle_noise_figure_db = 9.0;

  /// Constant offset on every vehicle -> BS channel (+6 dB by default).
  double to_bs_offset_db() const {
    return vehicle_antenna_gain_db + bs_antenna_gain_db - bs_noise_figure_db;
  }
  /// Constant offset on every vehicle -> vehicle channel (-3 dB by default).
  double to_vehicle_offset_db() const {
    return 2.0 * vehicle_antenna_gain_db - vehicle_noise_figure_db;
  }
  /// 3-D vehicle to BS distance in km.
  double bs_distance_km(Vec2 vehicle) const;
};

/// Frequency-flat part of every physical channel, in dB (negative loss plus
/// budget offsets). Entries are per vehicle (to BS) and per ordered vehicle
/// pair (tx, rx). The diagonal pair models a co-located transmitter and is
/// evaluated at the path-loss distance floor.
struct SlowFading {
  int vehicles = 0;
  std::vector<double> to_bs_db;  // [v]
  std::vector<double> v2v_db;    // [tx * vehicles + rx]

  double to_bs(int v) const { return to_bs_db[static_cast<std::size_t>(v)]; }
  double v2v(int tx, int rx) const {
    return v2v_db[static_cast<std::size_t>(tx * vehicles + rx)];
  }
};

/// v2i shadowing holds one entry per vehicle; v2v shadowing holds a symmetric
/// vehicles x vehicles matrix.
SlowFading compute_slow_fading(std::span<const Vehicle> vehicles,
                               const ShadowingField& v2i_shadowing,
                               const ShadowingField& v2v_shadowing,
                               const LinkBudget& budget,
                               const WinnerB1Los& v2v_model = {});

/// Linear per-band channel gains for one slot: g = 10^(alpha_dB/10) * h.
struct GainTensors {
  int vehicles = 0;
  int bands = 0;
  std::vector<double> to_bs;  // [v * bands + a]
  std::vector<double> v2v;    // [(tx * vehicles + rx) * bands + a]

  double to_bs_at(int v, int band) const {
    return to_bs[static_cast<std::size_t>(v * bands + band)];
  }
  double v2v_at(int tx, int rx, int band) const {
    return v2v[static_cast<std::size_t>((tx * vehicles + rx) * bands + band)];
  }
};

/// Draws independent fast fading per (channel, band) on top of the slow part.
/// Channels ending at the BS use k_to_bs; vehicle-to-vehicle channels use
/// k_v2v.
GainTensors realize_gains(const SlowFading& slow, int bands, double k_to_bs,
                          double k_v2v, Rng& rng);

}  // namespace v2xmeta::channel
