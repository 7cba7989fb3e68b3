#include "v2xmeta/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "v2xmeta/units.hpp"

namespace v2xmeta::channel {

namespace {

constexpr double kSpeedOfLight = 3.0e8;
constexpr double kEps = 1e-9;

std::vector<double> evenly_spaced(double first, double last, int blocks) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(blocks + 1));
  for (int i = 0; i <= blocks; ++i)
    out.push_back(first + (last - first) * static_cast<double>(i) / blocks);
  return out;
}

bool vertical(Heading h) { return h == Heading::North || h == Heading::South; }
double sign_of(Heading h) {
  return (h == Heading::North || h == Heading::East) ? 1.0 : -1.0;
}

double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

}  // namespace

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Vec2 unit_vector(Heading h) {
  switch (h) {
    case Heading::North: return {0.0, 1.0};
    case Heading::East: return {1.0, 0.0};
    case Heading::South: return {0.0, -1.0};
    case Heading::West: return {-1.0, 0.0};
  }
  return {};
}

Heading turn_left(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 3) % 4);
}
Heading turn_right(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}

// ------------------------------------------------------------------ RoadGrid

std::vector<double> RoadGrid::vertical_roads() const {
  return evenly_spaced(inset_m, width_m - inset_m, blocks_x);
}

std::vector<double> RoadGrid::horizontal_roads() const {
  return evenly_spaced(inset_m, height_m - inset_m, blocks_y);
}

double RoadGrid::lane_coordinate(Heading h, double road_center) const {
  switch (h) {
    case Heading::North: return road_center + lane_offset_m;
    case Heading::South: return road_center - lane_offset_m;
    case Heading::East: return road_center - lane_offset_m;
    case Heading::West: return road_center + lane_offset_m;
  }
  return road_center;
}

bool RoadGrid::inside(Vec2 p) const {
  return p.x >= 0.0 && p.x <= width_m && p.y >= 0.0 && p.y <= height_m;
}

bool RoadGrid::on_grid(const Vehicle& v, double tol) const {
  if (!inside(v.position)) return false;
  const bool vert = vertical(v.heading);
  const auto roads = vert ? vertical_roads() : horizontal_roads();
  const auto cross = vert ? horizontal_roads() : vertical_roads();
  const double lane_value = vert ? v.position.x : v.position.y;
  const double along = vert ? v.position.y : v.position.x;
  if (along < cross.front() - tol || along > cross.back() + tol) return false;
  return std::any_of(roads.begin(), roads.end(), [&](double r) {
    return std::abs(lane_coordinate(v.heading, r) - lane_value) <= tol;
  });
}

std::vector<Vehicle> drop_vehicles(const RoadGrid& grid, int count,
                                   double speed_kmh, Rng& rng) {
  const auto xs = grid.vertical_roads();
  const auto ys = grid.horizontal_roads();
  const int vertical_lanes = 2 * static_cast<int>(xs.size());
  const int lanes = vertical_lanes + 2 * static_cast<int>(ys.size());
  std::uniform_int_distribution<int> pick_lane(0, lanes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Vehicle> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int id = 0; id < count; ++id) {
    const int lane = pick_lane(rng);
    const double u = unit(rng);
    Vehicle v;
    v.id = id;
    v.speed_kmh = speed_kmh;
    if (lane < vertical_lanes) {
      v.heading = (lane % 2 == 0) ? Heading::North : Heading::South;
      const double road = xs[static_cast<std::size_t>(lane / 2)];
      v.position = {grid.lane_coordinate(v.heading, road),
                    ys.front() + u * (ys.back() - ys.front())};
    } else {
      const int k = lane - vertical_lanes;
      v.heading = (k % 2 == 0) ? Heading::East : Heading::West;
      const double road = ys[static_cast<std::size_t>(k / 2)];
      v.position = {xs.front() + u * (xs.back() - xs.front()),
                    grid.lane_coordinate(v.heading, road)};
    }
    out.push_back(v);
  }
  return out;
}

std::vector<Vehicle> step_mobility(const RoadGrid& grid,
                                   std::vector<Vehicle> vehicles, double dt_s,
                                   Rng& rng) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("step_mobility: dt must be > 0");
  const auto xs = grid.vertical_roads();
  const auto ys = grid.horizontal_roads();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (auto& v : vehicles) {
    double remaining = kmh_to_mps(v.speed_kmh) * dt_s;
    while (remaining > 0.0) {
      const bool vert = vertical(v.heading);
      const auto& cross = vert ? ys : xs;
      const double dir = sign_of(v.heading);
      double& along = vert ? v.position.y : v.position.x;

      // Next intersection strictly ahead.
      double next = dir > 0 ? cross.back() : cross.front();
      bool found = false;
      if (dir > 0) {
        for (double r : cross)
          if (r > along + kEps) { next = r; found = true; break; }
      } else {
        for (auto it = cross.rbegin(); it != cross.rend(); ++it)
          if (*it < along - kEps) { next = *it; found = true; break; }
      }
      if (!found) {
        // Sitting on the boundary road facing outwards: wrap around.
        along = dir > 0 ? cross.front() : cross.back();
        continue;
      }

      const double gap = std::abs(next - along);
      if (gap > remaining) {
        along += dir * remaining;
        remaining = 0.0;
        break;
      }
      along = next;
      remaining -= gap;

      if (unit(rng) < grid.turn_probability) {
        const Heading old_heading = v.heading;
        const double old_road = vert ? v.position.x : v.position.y;
        // Recover the centerline of the road we were driving on.
        const double centre = old_road - (grid.lane_coordinate(old_heading, 0.0));
        v.heading = unit(rng) < 0.5 ? turn_left(old_heading) : turn_right(old_heading);
        const double lane = grid.lane_coordinate(v.heading, next);
        if (vertical(v.heading)) {
          v.position = {lane, centre};
        } else {
          v.position = {centre, lane};
        }
      } else {
        const bool boundary = dir > 0 ? next >= cross.back() - kEps
                                      : next <= cross.front() + kEps;
        if (boundary) along = dir > 0 ? cross.front() : cross.back();
      }
    }
  }
  return vehicles;
}

// ------------------------------------------------------------------ path loss

double path_loss_v2i_db(double distance_km) {
  if (!(distance_km > 0.0))
    throw std::domain_error("path_loss_v2i: distance must be positive");
  return 128.1 + 37.6 * std::log10(distance_km);
}

double WinnerB1Los::breakpoint_m() const {
  const double fc_hz = carrier_ghz * 1e9;
  return 4.0 * (tx_height_m - height_offset_m) * (rx_height_m - height_offset_m) *
         fc_hz / kSpeedOfLight;
}

double WinnerB1Los::near_branch_db(double d) const {
  return 22.7 * std::log10(d) + 41.0 + 20.0 * std::log10(carrier_ghz / 5.0);
}

double WinnerB1Los::far_branch_db(double d) const {
  return 40.0 * std::log10(d) + 9.45 -
         17.3 * std::log10(tx_height_m - height_offset_m) -
         17.3 * std::log10(rx_height_m - height_offset_m) +
         2.7 * std::log10(carrier_ghz / 5.0);
}

double WinnerB1Los::operator()(double distance_m) const {
  const double d = std::max(distance_m, min_distance_m);
  return d < breakpoint_m() ? near_branch_db(d) : far_branch_db(d);
}

double path_loss_v2v_db(double distance_m, const WinnerB1Los& model) {
  return model(distance_m);
}

double path_loss_v2v_db(Vec2 tx, Vec2 rx, const WinnerB1Los& model) {
  return model(distance(tx, rx));
}

// ------------------------------------------------------------------ shadowing

ShadowingField make_shadowing(ShadowingParams params, std::size_t links,
                              Rng& rng) {
  ShadowingField f{params, std::vector<double>(links)};
  for (auto& s : f.values_db) s = params.std_db * standard_normal(rng);
  return f;
}

double shadowing_correlation(double displacement_m, const ShadowingParams& p) {
  return std::exp(-displacement_m / p.decorrelation_m);
}

ShadowingField update_shadowing(ShadowingField field,
                                std::span<const double> displacement_m,
                                Rng& rng) {
  if (displacement_m.size() != field.values_db.size())
    throw std::invalid_argument("update_shadowing: displacement size mismatch");
  for (std::size_t i = 0; i < field.values_db.size(); ++i) {
    if (displacement_m[i] < 0.0)
      throw std::invalid_argument("update_shadowing: negative displacement");
    const double rho = shadowing_correlation(displacement_m[i], field.params);
    const double innovation = field.params.std_db * standard_normal(rng);
    field.values_db[i] = rho * field.values_db[i] +
                         std::sqrt(1.0 - rho * rho) * innovation;
  }
  return field;
}

ShadowingField update_shadowing(ShadowingField field, double displacement_m,
                                Rng& rng) {
  const std::vector<double> d(field.values_db.size(), displacement_m);
  return update_shadowing(std::move(field), d, rng);
}

// ------------------------------------------------------------------ fading

FadingSample sample_fading(double k_factor, Rng& rng) {
  if (!(k_factor >= 0.0))
    throw std::domain_error("sample_fading: K-factor must be non-negative");
  const double los = std::sqrt(k_factor / (k_factor + 1.0));
  const double scatter = std::sqrt(0.5 / (k_factor + 1.0));
  const double re = los + scatter * standard_normal(rng);
  const double im = scatter * standard_normal(rng);
  return {re * re + im * im, k_factor};
}

double ricean_power_variance(double k_factor) {
  return (2.0 * k_factor + 1.0) / ((k_factor + 1.0) * (k_factor + 1.0));
}

// ------------------------------------------------------------------ gains

double LinkBudget::bs_distance_km(Vec2 vehicle) const {
  const double dh = bs_height_m - vehicle_height_m;
  const double planar = distance(vehicle, bs_position);
  return std::sqrt(planar * planar + dh * dh) / 1000.0;
}

SlowFading compute_slow_fading(std::span<const Vehicle> vehicles,
                               const ShadowingField& v2i_shadowing,
                               const ShadowingField& v2v_shadowing,
                               const LinkBudget& budget,
                               const WinnerB1Los& v2v_model) {
  const int n = static_cast<int>(vehicles.size());
  if (v2i_shadowing.values_db.size() != vehicles.size() ||
      v2v_shadowing.values_db.size() != vehicles.size() * vehicles.size())
    throw std::invalid_argument("compute_slow_fading: shadowing shape mismatch");

  SlowFading slow;
  slow.vehicles = n;
  slow.to_bs_db.resize(static_cast<std::size_t>(n));
  slow.v2v_db.resize(static_cast<std::size_t>(n * n));
  for (int v = 0; v < n; ++v) {
    const double pl = path_loss_v2i_db(budget.bs_distance_km(vehicles[v].position));
    slow.to_bs_db[v] = -(pl + v2i_shadowing.values_db[v]) + budget.to_bs_offset_db();
  }
  for (int tx = 0; tx < n; ++tx) {
    for (int rx = 0; rx < n; ++rx) {
      const std::size_t idx = static_cast<std::size_t>(tx * n + rx);
      const double pl = v2v_model(distance(vehicles[tx].position, vehicles[rx].position));
      const double shadow = tx == rx ? 0.0 : v2v_shadowing.values_db[idx];
      slow.v2v_db[idx] = -(pl + shadow) + budget.to_vehicle_offset_db();
    }
  }
  return slow;
}

GainTensors realize_gains(const SlowFading& slow, int bands, double k_to_bs,
                          double k_v2v, Rng& rng) {
  GainTensors g;
  g.vehicles = slow.vehicles;
  g.bands = bands;
  const int n = slow.vehicles;
  g.to_bs.resize(static_cast<std::size_t>(n * bands));
  g.v2v.resize(static_cast<std::size_t>(n * n * bands));
  for (int v = 0; v < n; ++v) {
    const double alpha = db_to_linear(slow.to_bs(v));
    for (int a = 0; a < bands; ++a)
      g.to_bs[static_cast<std::size_t>(v * bands + a)] =
          alpha * sample_fading(k_to_bs, rng).power;
  }
  for (int tx = 0; tx < n; ++tx) {
    for (int rx = 0; rx < n; ++rx) {
      const double alpha = db_to_linear(slow.v2v(tx, rx));
      for (int a = 0; a < bands; ++a)
        g.v2v[static_cast<std::size_t>((tx * n + rx) * bands + a)] =
            alpha * sample_fading(k_v2v, rng).power;
    }
  }
  return g;
}

}  // namespace v2xmeta::channel
