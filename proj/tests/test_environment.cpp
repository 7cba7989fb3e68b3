#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "v2xmeta/environment.hpp"
#include "v2xmeta/units.hpp"

using namespace v2xmeta;

namespace {

LinkGains flat_gains(int links, int bands, double g) {
  LinkGains lg;
  lg.links = links;
  lg.bands = bands;
  const auto NA = static_cast<std::size_t>(links * bands);
  lg.v2i.assign(static_cast<std::size_t>(bands), g);
  lg.v2v.assign(NA, g);
  lg.v2v_to_bs.assign(NA, g);
  lg.v2i_to_v2v.assign(NA, g);
  lg.cross.assign(NA * static_cast<std::size_t>(links), g);
  return lg;
}

TaskConfig quick_task() {
  TaskConfig t;
  t.upsilon = 1.0;  // skip calibration
  return t;
}

}  // namespace

TEST_SUITE("environment") {

TEST_CASE("link counts and observation size") {
  auto t = quick_task();
  Environment e4(t, 1);
  CHECK(e4.agents() == 4);
  CHECK(e4.observe(0).features.size() == 18);
  t.links_per_vehicle = 2;
  Environment e8(t, 1);
  CHECK(e8.agents() == 8);
  CHECK(e8.observe_all().size() == 8);
}

TEST_CASE("same task and seed give identical observations") {
  Environment a(quick_task(), 7), b(quick_task(), 7), c(quick_task(), 8);
  const auto oa = a.observe_all(), ob = b.observe_all(), oc = c.observe_all();
  for (std::size_t i = 0; i < oa.size(); ++i) CHECK(oa[i].features == ob[i].features);
  CHECK(oa[0].features != oc[0].features);
}

TEST_CASE("interference-free V2I SINR and rate") {
  auto task = quick_task();
  task.bands = 1;
  task.vehicles = 2;
  const auto phy = physical_layer(task);
  // V2V link on band 0 at -100 dBm with zero gain toward the BS.
  auto g = flat_gains(1, 1, 0.0);
  g.v2i[0] = db_to_linear(-90.5);
  const std::vector<ActionIndex> act{ActionIndex::from(0, 3)};
  const auto p = allocate_powers(task, 1, act);
  const double sinr = compute_sinr_v2i(g, p, phy)[0];
  CHECK(linear_to_db(sinr) == doctest::Approx(46.5).epsilon(1e-12));
  CHECK(sinr == doctest::Approx(4.4668e4).epsilon(1e-4));
  const double rate = task.band_width_hz * std::log2(1.0 + sinr);
  CHECK(rate / 1e6 == doctest::Approx(15.447).epsilon(1e-4));
}

TEST_CASE("silent band and symmetric links") {
  auto task = quick_task();
  const auto phy = physical_layer(task);
  auto g = flat_gains(2, 4, 1e-9);
  for (auto& x : g.v2i_to_v2v) x = 0.0;  // V2I transmitter switched off in effect
  const std::vector<ActionIndex> solo{ActionIndex::from(0, 0), ActionIndex::from(1, 0)};
  const auto s = compute_sinr_v2v(g, allocate_powers(task, 2, solo), phy);
  CHECK(s[g.idx(0, 0)] == doctest::Approx(dbm_to_mw(23.0) * 1e-9 / phy.noise_mw).epsilon(1e-14));
  CHECK(s[g.idx(0, 1)] == 0.0);
  const std::vector<ActionIndex> shared{ActionIndex::from(2, 1), ActionIndex::from(2, 1)};
  const auto t = compute_sinr_v2v(g, allocate_powers(task, 2, shared), phy);
  CHECK(t[g.idx(0, 2)] == t[g.idx(1, 2)]);
}

TEST_CASE("SINRs match a dB-domain recomputation") {
  Rng rng(17);
  std::uniform_real_distribution<double> gdb(-130.0, -60.0);
  std::uniform_int_distribution<int> act(0, 11);
  auto task = quick_task();
  task.vehicles = 3;
  task.bands = 3;
  const auto phy = physical_layer(task);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = flat_gains(3, 3, 0.0);
    for (auto* v : {&g.v2i, &g.v2v, &g.v2v_to_bs, &g.v2i_to_v2v, &g.cross})
      for (auto& x : *v) x = db_to_linear(gdb(rng));
    std::vector<ActionIndex> a{{act(rng)}, {act(rng)}, {act(rng)}};
    const auto p = allocate_powers(task, 3, a);
    const auto ref = oracle::sinr_db(g, task, a);
    const auto v2i = compute_sinr_v2i(g, p, phy);
    const auto v2v = compute_sinr_v2v(g, p, phy);
    for (int b = 0; b < 3; ++b) CHECK(std::abs(v2i[b] / oracle::from_db(ref.v2i[b]) - 1.0) < 1e-9);
    for (int n = 0; n < 3; ++n) {
      const auto i = g.idx(n, a[n].band());
      CHECK(std::abs(v2v[i] / oracle::from_db(ref.v2v[i]) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("all agents at -100 dBm") {
  auto task = quick_task();
  Environment env(task, 3);
  const auto gains = env.state().gains;
  std::vector<ActionIndex> quiet;
  for (int n = 0; n < env.agents(); ++n) quiet.push_back(ActionIndex::from(n % 4, 3));
  const auto r = env.step(quiet);
  const auto phy = env.phy();
  for (double c : r.v2v_rate_bps) CHECK(c < 1e3);
  for (int a = 0; a < task.bands; ++a) {
    const double clean = phy.band_width_hz * std::log2(1.0 + phy.v2i_power_mw * gains.v2i[a] / phy.noise_mw);
    CHECK(r.v2i_rate_bps[a] == doctest::Approx(clean).epsilon(1e-6));
  }
}

TEST_CASE("reward: delivered links earn upsilon") {
  const std::vector<double> v2i{1e6, 2e6}, v2v{3e6, 5e6}, left{0.0, 100.0};
  const double r = compute_reward(v2i, v2v, left, RewardWeights{}, 7.0, 1e6);
  CHECK(r == doctest::Approx(0.1 * 3.0 + 0.9 * (7.0 + 5.0)).epsilon(1e-15));
}

TEST_CASE("payload and episode length") {
  auto task = quick_task();
  task = with_factors(task, 1, 3.0, 20.0, 15.0, 3.0);
  task.upsilon = 1.0;
  CHECK(task.payload_bits == 25440.0);
  Environment env(task, 2);
  for (double b : env.state().remaining_bits) CHECK(b == 25440.0);
  std::vector<ActionIndex> a(4, ActionIndex::from(0, 0));
  int steps = 0;
  StepResult r;
  do {
    r = env.step(a);
    ++steps;
  } while (!r.done);
  CHECK(steps == task.slots);
  CHECK_THROWS_AS(env.step(a), ContractError);
  env.next_episode();
  CHECK(env.state().slot == 0);
  CHECK(env.state().episode == 1);
}

TEST_CASE("invalid tasks are rejected") {
  auto t = quick_task();
  t.payload_bits = 1000.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = quick_task();
  t.links_per_vehicle = 4;
  CHECK_THROWS_AS(Environment(t, 1), ConfigError);
  t = quick_task();
  CHECK_THROWS_AS(Environment(t, 1).step(std::vector<ActionIndex>(3)), ContractError);
}

TEST_CASE("upsilon calibration is deterministic and positive") {
  TaskConfig t;
  t.calibration_episodes = 2;
  const double u = calibrate_upsilon(t);
  CHECK(u > 0.0);
  CHECK(calibrate_upsilon(t) == u);
}

TEST_CASE("episode log has one row per agent and slot") {
  Environment env(quick_task(), 4);
  std::ostringstream out;
  write_episode_log_header(out, 4);
  std::vector<ActionIndex> a(4, ActionIndex::from(1, 1));
  const auto r = env.step(a);
  append_episode_log(out, 0, 0, env.task(), a, r);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + 4);
}

}  // TEST_SUITE
