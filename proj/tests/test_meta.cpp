#include <doctest.h>

#include <set>

#include "v2xmeta/meta.hpp"

using namespace v2xmeta;
using namespace v2xmeta::meta;

namespace {

const nn::Architecture kActor{18, {8, 4}, 16};
const nn::Architecture kCritic{18, {8, 4}, 1};

TaskConfig quick(TaskConfig t = {}) {
  t.upsilon = 1.0;
  return t;
}

nn::ParameterSet filled(const nn::Architecture& a, double v) {
  nn::ParameterSet p(a);
  for (auto& x : p.values()) x = v;
  return p;
}

}  // namespace

TEST_SUITE("meta") {

TEST_CASE("task-set sizes") {
  CHECK(generate_task_set(training_grid(72), {}).size() == 72);
  CHECK(generate_task_set(training_grid(243), {}).size() == 243);
  CHECK(generate_task_set(training_grid(432), {}).size() == 432);
  CHECK(generate_task_set(desk_grid(), {}).size() == 32);
  CHECK(generate_task_set(held_out_grid(), {}).size() == 16);
  CHECK(generate_task_set(sub_grid(desk_grid(), {true, false, true, false, true}), {}).size() == 8);
  CHECK(generate_task_set(FactorGrid{"one", {1}, {10}, {2}, {10}, {0}}, {}).size() == 1);
  CHECK_THROWS_AS(training_grid(100), ConfigError);
  CHECK_THROWS_AS(generate_task_set(FactorGrid{"empty", {}, {10}, {2}, {10}, {0}}, {}), ConfigError);
}

TEST_CASE("task sampling") {
  const auto set = generate_task_set(training_grid(243), {});
  Rng a(1), b(1);
  const auto s = sample_tasks(set, 20, a);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 20);
  CHECK(sample_tasks(set, 20, b) == s);
  Rng c(2);
  auto all = sample_tasks(set, 243, c);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  Rng d(3);
  CHECK_THROWS_AS(sample_tasks(set, 244, d), ConfigError);
  CHECK(sample_tasks(set, 300, d, true).size() == 300);
}

TEST_CASE("off-grid factor count") {
  const auto g = desk_grid();
  CHECK(off_grid_factors(g, with_factors({}, 1, 2, 10, 10, 0)) == 0);
  CHECK(off_grid_factors(g, with_factors({}, 3, 8, 40, 25, 9)) == 5);
}

TEST_CASE("reptile algebra") {
  const nn::Architecture a{2, {}, 1};
  const auto psi = filled(a, 0.0);
  const std::vector<nn::ParameterSet> one{filled(a, 0.6)};
  const auto r = reptile_update(psi, one, 3e-4, 1e-4);
  for (double v : r.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  Rng rng(4);
  const auto base = nn::initialize(kActor, rng, 0.1);
  const std::vector<nn::ParameterSet> adapted{nn::initialize(kActor, rng, 0.1)};
  CHECK(reptile_update(base, adapted, 3e-4, 3e-4) == adapted[0]);

  const std::vector<nn::ParameterSet> same(5, base);
  CHECK(reptile_update(base, same, 3e-4, 1e-4) == base);
  CHECK(reptile_update(base, same, 3e-4, 5 * 3e-4) == base);
  CHECK_THROWS(reptile_update(base, std::vector<nn::ParameterSet>{filled(a, 1.0)}, 1.0, 1.0));
}

TEST_CASE("inner loop: episode count, zero step, determinism") {
  Rng rng(5);
  const auto actor = nn::initialize(kActor, rng);
  const auto critic = nn::initialize(kCritic, rng);
  ppo::PpoConfig cfg;
  cfg.trajectories = 3;
  int rounds = 0;
  const auto r = inner_adapt(quick(), actor, critic, 2, cfg, 9,
                             [&](int, const ppo::Learner&, std::span<const ppo::EpisodeStats>) { ++rounds; });
  CHECK(r.episodes.size() == 6);
  CHECK(rounds == 2);
  CHECK(!(r.actor == actor));
  const auto again = inner_adapt(quick(), actor, critic, 2, cfg, 9);
  CHECK(again.actor == r.actor);
  CHECK(again.critic == r.critic);

  cfg.learning_rate = 0.0;
  const auto frozen = inner_adapt(quick(), actor, critic, 1, cfg, 9);
  CHECK(frozen.actor == actor);
  CHECK(frozen.critic == critic);

  const auto zero = inner_adapt(quick(), actor, critic, 0, ppo::PpoConfig{}, 9);
  CHECK(zero.actor == actor);
  CHECK(zero.episodes.empty());
}

TEST_CASE("meta_train: loop count and thread-count independence") {
  auto grid = FactorGrid{"tiny", {1}, {10, 30}, {2}, {10}, {0, 6}};
  TaskConfig base = quick();
  const auto set = generate_task_set(grid, base);
  MetaSchedule s;
  s.outer_loops = 0;
  s.tasks_per_loop = 2;
  s.inner_loops = 1;
  s.ppo.trajectories = 1;
  s.ppo.updates = 2;
  auto init = initial_state(base, 3, s);
  Rng rng(6);
  init.actor = nn::initialize(kActor, rng);
  init.critic = nn::initialize(kCritic, rng);
  const auto untouched = meta_train(set, s, 1, init);
  CHECK(untouched.actor == init.actor);
  CHECK(untouched.outer_loop == 0);

  s.outer_loops = 2;
  int rows = 0;
  MetaHooks hooks;
  hooks.training_row = [&](const TrainingRow&) { ++rows; };
  const auto one = meta_train(set, s, 1, init, hooks);
  CHECK(one.outer_loop == 2);
  CHECK(rows == 4);
  s.jobs = 2;
  const auto two = meta_train(set, s, 1, init);
  CHECK(two.actor == one.actor);
  CHECK(two.critic == one.critic);
  s.tasks_per_loop = 5;
  CHECK_THROWS_AS(meta_train(set, s, 1, init), ConfigError);
}

TEST_CASE("fair outer-loop scaling") {
  CHECK(fair_outer_loops(8, 60, 32) == 15);
  CHECK(fair_outer_loops(1, 60, 243) == 1);
}

}  // TEST_SUITE
