#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "v2xmeta/channel.hpp"
#include "v2xmeta/units.hpp"

using namespace v2xmeta;
using namespace v2xmeta::channel;

TEST_SUITE("channel") {

TEST_CASE("v2i path loss values") {
  CHECK(path_loss_v2i_db(1.0) == doctest::Approx(128.1).epsilon(1e-12));
  CHECK(std::abs(path_loss_v2i_db(0.1) - 90.5) < 1e-3);
  CHECK(std::abs(path_loss_v2i_db(0.5) - 116.7813) < 1e-3);
  CHECK_THROWS_AS(path_loss_v2i_db(0.0), std::domain_error);
}

TEST_CASE("v2v path loss is monotone and continuous at the breakpoint") {
  const WinnerB1Los m;
  CHECK(m.breakpoint_m() == doctest::Approx(4.0 * 0.5 * 0.5 * 2e9 / 3e8).epsilon(1e-3));
  for (double d = 3.0; d < 2000.0; d *= 1.37) CHECK(path_loss_v2v_db(2 * d) >= path_loss_v2v_db(d));
  const double bp = m.breakpoint_m();
  CHECK(std::abs(m.near_branch_db(bp) - m.far_branch_db(bp)) < 0.5);
  // Below the floor the loss is flat.
  CHECK(path_loss_v2v_db(0.5) == path_loss_v2v_db(3.0));
}

TEST_CASE("v2v path loss at 100 m against a hand evaluation") {
  const double hand = 40.0 * std::log10(100.0) + 9.45 - 17.3 * std::log10(0.5) -
                      17.3 * std::log10(0.5) + 2.7 * std::log10(2.0 / 5.0);
  CHECK(std::abs(path_loss_v2v_db(100.0) - hand) < 1e-6);
}

TEST_CASE("shadowing correlation and identity at zero displacement") {
  CHECK(shadowing_correlation(50.0, kV2IShadowing) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(shadowing_correlation(0.0, kV2IShadowing) == 1.0);
  Rng rng(3);
  auto f = make_shadowing(kV2IShadowing, 5, rng);
  const auto g = update_shadowing(f, 0.0, rng);
  CHECK(g.values_db == f.values_db);
}

TEST_CASE("shadowing stays stationary under repeated updates") {
  Rng rng(11);
  auto f = make_shadowing(kV2VShadowing, 1, rng);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    f = update_shadowing(std::move(f), 4.0, rng);
    s += f.values_db[0];
    s2 += f.values_db[0] * f.values_db[0];
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(var / 9.0 - 1.0) < 0.05);
}

TEST_CASE("ricean fading moments") {
  auto moments = [](double k, int n, std::uint64_t seed) {
    Rng rng(seed);
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double h = sample_fading(k, rng).power;
      s += h;
      s2 += h * h;
    }
    const double mean = s / n;
    return std::pair{mean, s2 / n - mean * mean};
  };
  const auto [m0, v0] = moments(0.0, 1000000, 1);
  CHECK(std::abs(m0 - 1.0) < 0.01);
  CHECK(std::abs(v0 - 1.0) < 0.05);
  const auto [m6, v6] = moments(6.0, 1000000, 2);
  CHECK(std::abs(m6 - 1.0) < 0.01);
  CHECK(std::abs(v6 / (13.0 / 49.0) - 1.0) < 0.05);
  CHECK(ricean_power_variance(6.0) == doctest::Approx(13.0 / 49.0));
  const auto [mb, vb] = moments(1e6, 1000, 3);
  CHECK(std::abs(mb - 1.0) < 1e-2);
  CHECK(vb < 1e-5);
  Rng rng(0);
  CHECK_THROWS_AS(sample_fading(-1.0, rng), std::domain_error);
}

TEST_CASE("mobility: displacement, straight driving and containment") {
  RoadGrid grid;
  grid.turn_probability = 0.0;
  Rng rng(5);
  auto cars = drop_vehicles(grid, 4, 36.0, rng);
  for (const auto& c : cars) CHECK(grid.on_grid(c));
  const auto moved = step_mobility(grid, cars, 0.1, rng);
  for (std::size_t i = 0; i < cars.size(); ++i) {
    const double d = distance(cars[i].position, moved[i].position);
    if (d < 2.0) CHECK(d == doctest::Approx(1.0).epsilon(1e-9));  // else wrapped at the edge
    CHECK(moved[i].heading == cars[i].heading);
  }

  grid.turn_probability = 0.4;
  auto v = drop_vehicles(grid, 8, 60.0, rng);
  for (int s = 0; s < 10000; ++s) {
    v = step_mobility(grid, std::move(v), 0.1, rng);
    for (const auto& c : v) REQUIRE(grid.inside(c.position));
  }
  for (const auto& c : v) CHECK(grid.on_grid(c));
}

TEST_CASE("dB conversions") {
  CHECK(db_to_linear(-90.5) == doctest::Approx(std::pow(10.0, -9.05)).epsilon(1e-14));
  for (double x = -150.0; x < 60.0; x += 0.7) CHECK(std::abs(linear_to_db(db_to_linear(x)) - x) < 1e-9);
}

TEST_CASE("link budget offsets") {
  const LinkBudget b;
  CHECK(b.to_bs_offset_db() == 6.0);
  CHECK(b.to_vehicle_offset_db() == -3.0);
  // 3-D distance includes the antenna height difference.
  CHECK(b.bs_distance_km(b.bs_position) == doctest::Approx(0.0235).epsilon(1e-12));
}

TEST_CASE("gain tensors: structure and determinism") {
  RoadGrid grid;
  Rng rng(9);
  const auto cars = drop_vehicles(grid, 4, 20.0, rng);
  const auto s1 = make_shadowing(kV2IShadowing, 4, rng);
  auto s2 = make_shadowing(kV2VShadowing, 16, rng);
  const auto slow = compute_slow_fading(cars, s1, s2, LinkBudget{});
  Rng a(42), b(42);
  const auto ga = realize_gains(slow, 4, 15.0, 3.0, a);
  const auto gb = realize_gains(slow, 4, 15.0, 3.0, b);
  CHECK(ga.to_bs == gb.to_bs);
  CHECK(ga.v2v == gb.v2v);
  // Bands share the slow part: ratios between bands are fading only, so with
  // an effectively deterministic channel the bands coincide.
  Rng c(1);
  const auto los = realize_gains(slow, 2, 1e12, 1e12, c);
  CHECK(los.to_bs_at(0, 0) == doctest::Approx(los.to_bs_at(0, 1)).epsilon(1e-5));
  CHECK(los.to_bs_at(0, 0) == doctest::Approx(db_to_linear(slow.to_bs(0))).epsilon(1e-5));
}

}  // TEST_SUITE
