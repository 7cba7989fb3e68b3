#include <doctest.h>

#include <cmath>

#include "v2xmeta/evaluation.hpp"
#include "v2xmeta/units.hpp"

using namespace v2xmeta;
using namespace v2xmeta::eval;

namespace {

TaskConfig small_task(int vehicles, int bands) {
  TaskConfig t;
  t.vehicles = vehicles;
  t.bands = bands;
  t.upsilon = 1.0;
  return t;
}

LinkGains random_gains(int links, int bands, Rng& rng) {
  std::uniform_real_distribution<double> db(-120.0, -70.0);
  LinkGains g;
  g.links = links;
  g.bands = bands;
  const auto NA = static_cast<std::size_t>(links * bands);
  for (auto* v : {&g.v2v, &g.v2v_to_bs, &g.v2i_to_v2v}) v->resize(NA);
  g.v2i.resize(static_cast<std::size_t>(bands));
  g.cross.resize(NA * static_cast<std::size_t>(links));
  for (auto* v : {&g.v2i, &g.v2v, &g.v2v_to_bs, &g.v2i_to_v2v, &g.cross})
    for (auto& x : *v) x = db_to_linear(db(rng));
  return g;
}

// Plain enumeration over joint indices, agent 0 most significant.
std::vector<ActionIndex> enumerate(const LinkGains& g, const TaskConfig& t, const PhysicalLayer& phy) {
  const int M = t.action_count(), N = g.links;
  std::int64_t total = 1;
  for (int n = 0; n < N; ++n) total *= M;
  double best = -1.0;
  std::vector<ActionIndex> arg;
  for (std::int64_t j = 0; j < total; ++j) {
    std::vector<ActionIndex> a(static_cast<std::size_t>(N));
    std::int64_t rest = j;
    for (int n = N - 1; n >= 0; --n) {
      a[n].index = static_cast<int>(rest % M);
      rest /= M;
    }
    const double r = sum_v2v_rate(g, t, phy, a);
    if (r > best) {
      best = r;
      arg = a;
    }
  }
  return arg;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("maxV2V agrees with enumeration") {
  const auto task = small_task(2, 2);
  const auto phy = physical_layer(task);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto g = random_gains(2, 2, rng);
    CHECK(centralized_max_v2v(g, task, phy) == enumerate(g, task, phy));
  }
}

TEST_CASE("maxV2V ties go to the lowest joint index") {
  const auto task = small_task(2, 2);
  const auto phy = physical_layer(task);
  Rng rng(2);
  auto g = random_gains(2, 2, rng);
  for (auto& x : g.v2v) x = 0.0;  // every joint action scores zero
  const auto a = centralized_max_v2v(g, task, phy);
  CHECK(a[0].index == 0);
  CHECK(a[1].index == 0);
}

TEST_CASE("maxV2V with one link is a direct scan") {
  const auto task = small_task(2, 2);
  const auto phy = physical_layer(task);
  Rng rng(3);
  const auto g = random_gains(1, 2, rng);
  double best = -1.0;
  int arg = -1;
  for (int k = 0; k < task.action_count(); ++k) {
    const std::vector<ActionIndex> a{{k}};
    const double r = sum_v2v_rate(g, task, phy, a);
    if (r > best) best = r, arg = k;
  }
  CHECK(centralized_max_v2v(g, task, phy)[0].index == arg);
}

TEST_CASE("maxV2V refuses oversized searches") {
  const auto task = small_task(4, 4);
  const auto phy = physical_layer(task);
  Rng rng(4);
  const auto g = random_gains(8, 4, rng);
  CHECK_THROWS_AS(centralized_max_v2v(g, task, phy), BudgetExceeded);
}

TEST_CASE("evaluate: row count, determinism, random-policy sanity band") {
  TaskConfig t;
  t.upsilon = 1.0;
  RandomPolicy p;
  const auto a = evaluate(p, t, 50, 7);
  CHECK(a.rows.size() == 50);
  CHECK(a.success_probability > 0.0);
  CHECK(a.success_probability < 1.0);
  RandomPolicy q;
  const auto b = evaluate(q, t, 50, 7);
  CHECK(b.reward.mean == a.reward.mean);
  CHECK(b.v2i_sum_rate.mean == a.v2i_sum_rate.mean);
  const std::vector<EvalReport> both{a, b};
  const auto m = merge(both);
  CHECK(m.rows.size() == 100);
  CHECK(m.rows.back().episode == 99);
}

TEST_CASE("greedy evaluation is deterministic") {
  TaskConfig t;
  t.upsilon = 1.0;
  const auto c = random_init(t, 3);
  GreedyPolicy a("g", c.actor), b("g", c.actor);
  CHECK(evaluate(a, t, 3, 5).reward.mean == evaluate(b, t, 3, 5).reward.mean);
}

TEST_CASE("summaries") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  CHECK(s.mean == 2.5);
  CHECK(s.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(s.ci95 == doctest::Approx(1.96 * s.std_error));
}

TEST_CASE("adapt: zero rounds is the identity and shapes are checked") {
  TaskConfig t;
  t.upsilon = 1.0;
  const auto c = random_init(t, 1);
  const auto r = adapt(c, t, 0, ppo::PpoConfig{}, 2);
  CHECK(r.actor == c.actor);
  CHECK(r.critic == c.critic);
  auto wide = t;
  wide.vehicles = 5;
  wide.bands = 5;
  CHECK_THROWS_AS(adapt(c, wide, 1, ppo::PpoConfig{}, 2), ContractError);
}

TEST_CASE("baseline training tasks") {
  const auto g = meta::desk_grid();
  const auto test = with_factors({}, 1, 3, 20, 15, 3);
  const auto mm = mismatched_task(test, g);
  CHECK(mm.links_per_vehicle == 2);
  CHECK(mm.payload_multiple() == 6.0);
  CHECK(mm.ricean_k_v2v == 0.0);

  const auto d0 = distance_task(g, 0);
  CHECK(meta::off_grid_factors(g, d0) == 0);
  const auto d5 = distance_task(g, 5);
  CHECK(meta::off_grid_factors(g, d5) == 5);
  CHECK(d5.links_per_vehicle == 3);
  CHECK(d5.speed_kmh == 40.0);
  CHECK(d5.payload_multiple() == 8.0);
  CHECK(d5.ricean_k_v2i == 25.0);
  CHECK(d5.ricean_k_v2v == 9.0);
  for (int k = 0; k <= 5; ++k) CHECK(meta::off_grid_factors(g, distance_task(g, k)) == k);
}

TEST_CASE("episodes to a fraction of the final reward") {
  std::vector<double> curve(100);
  for (int i = 0; i < 100; ++i) curve[i] = 1.0 - std::exp(-i / 10.0);
  // Block means first reach 0.95 of the final window around episode 30.
  const int e = episodes_to_fraction(curve, 5, 0.95, 10);
  CHECK(e % 5 == 0);
  CHECK(e >= 25);
  CHECK(e <= 40);
  const std::vector<double> flat(20, 1.0);
  CHECK(episodes_to_fraction(flat, 5, 0.95, 5) == 5);
}

TEST_CASE("policy names") {
  for (auto k : {PolicyKind::MetaInit, PolicyKind::RandInit, PolicyKind::Matched,
                 PolicyKind::Mismatched, PolicyKind::Random, PolicyKind::MaxV2V})
    CHECK(parse_policy_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_policy_kind("greedy"), ConfigError);
}

}  // TEST_SUITE
