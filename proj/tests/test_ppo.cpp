#include <doctest.h>

#include "oracles.hpp"
#include "v2xmeta/ppo.hpp"

using namespace v2xmeta;
using namespace v2xmeta::ppo;

namespace {
const nn::Architecture kSmallActor{18, {8, 4, 2}, 16};
const nn::Architecture kSmallCritic{18, {8, 4, 2}, 1};
}  // namespace

TEST_SUITE("ppo") {

TEST_CASE("collect: record count and layout") {
  TaskConfig t;
  t.upsilon = 1.0;
  Environment env(t, 1);
  Rng rng(2);
  const auto actor = nn::initialize(nn::actor_architecture(18, 16), rng);
  const auto critic = nn::initialize(nn::critic_architecture(18), rng);
  Rng policy(3);
  const auto b = collect(env, actor, critic, 10, policy);
  CHECK(b.size() == 4000);
  CHECK(b.episodes.size() == 10);
  CHECK(b.observations.size() == 4000 * 18);
  int dones = 0;
  for (auto d : b.dones) dones += d;
  CHECK(dones == 40);
  CHECK(b.dones[99] == 1);
  CHECK(b.dones[98] == 0);

  Environment env2(t, 1);
  Rng policy2(3);
  const auto c = collect(env2, actor, critic, 10, policy2);
  CHECK(c.actions == b.actions);
  CHECK(c.rewards == b.rewards);
}

TEST_CASE("GAE special cases") {
  const std::vector<double> r{1.0, 1.0}, v{0.0, 0.0};
  const std::vector<std::uint8_t> d{0, 1};
  const auto a = compute_gae(r, v, d, 1.0, 1.0);
  CHECK(a.advantages == std::vector<double>{2.0, 1.0});

  Rng rng(4);
  std::normal_distribution<double> g;
  std::vector<double> rr(7), vv(7);
  for (auto& x : rr) x = g(rng);
  for (auto& x : vv) x = g(rng);
  const std::vector<std::uint8_t> dd{0, 0, 1, 0, 0, 0, 1};
  const auto z = compute_gae(rr, vv, dd, 0.9, 0.0);
  CHECK(z.advantages == z.td_errors);
  for (std::size_t t = 0; t < rr.size(); ++t) CHECK(z.returns[t] == z.advantages[t] + vv[t]);
}

TEST_CASE("GAE equals the direct double sum") {
  Rng rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(10), v(10);
    for (auto& x : r) x = g(rng);
    for (auto& x : v) x = g(rng);
    std::vector<std::uint8_t> d(10, 0);
    d[4] = 1;
    d[9] = 1;
    const auto a = compute_gae(r, v, d, 0.99, 0.95);
    const auto ref = oracle::gae_double_sum(r, v, d, 0.99, 0.95);
    for (int t = 0; t < 10; ++t) CHECK(std::abs(a.advantages[t] - ref[t]) < 1e-12);
  }
  const std::vector<double> r{1.0}, v{0.0};
  const std::vector<std::uint8_t> open{0};
  CHECK_THROWS_AS(compute_gae(r, v, open, 0.99, 0.95), ContractError);
}

TEST_CASE("clip arithmetic") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == 1.2);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == -0.8);
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == -1.5);
}

TEST_CASE("identity ratio: objective is the mean advantage") {
  Rng rng(6);
  const auto actor = nn::initialize(kSmallActor, rng, 0.5);
  auto b = oracle::synthetic_batch(actor, 2, 5, rng, 0.0);
  std::vector<double> adv(b.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) mean += (adv[i] = 0.1 * static_cast<double>(i) - 0.3);
  mean /= static_cast<double>(adv.size());
  CHECK(actor_loss(actor, b, adv, 0.2) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("critic loss cases") {
  Rng rng(7);
  nn::ParameterSet zero(kSmallCritic);
  auto b = oracle::synthetic_batch(nn::initialize(kSmallActor, rng), 1, 4, rng);
  for (auto& r : b.rewards) r = 1.0;
  for (auto& v : b.values) v = 0.0;
  CHECK(critic_loss(zero, b, 0.0) == doctest::Approx(1.0));
  // Perfect values on a deterministic episode: V_t = r_t + gamma V_{t+1}.
  nn::ParameterSet c(kSmallCritic);
  c.bias(3)(0) = 2.0;  // V == 2 everywhere
  for (auto& v : b.values) v = 2.0;
  for (std::size_t t = 0; t < b.size(); ++t) b.rewards[t] = b.dones[t] ? 2.0 : 2.0 - 0.5 * 2.0;
  CHECK(critic_loss(c, b, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(8);
  for (int point = 0; point < 5; ++point) {
    const auto actor = nn::initialize(kSmallActor, rng, 0.5);
    const auto critic = nn::initialize(kSmallCritic, rng, 0.5);
    const auto b = oracle::synthetic_batch(actor, 3, 4, rng);
    std::vector<double> adv(b.size());
    std::normal_distribution<double> g;
    for (auto& a : adv) a = g(rng);
    for (double ent : {0.0, 0.05}) {
      const auto obj = actor_objective(actor, b, adv, 0.2, ent);
      const auto fd = oracle::finite_difference(
          actor, obj.grad,
          [&](const nn::ParameterSet& q) { return actor_objective(q, b, adv, 0.2, ent).loss; },
          [&](const nn::ParameterSet& q) {
            auto p = oracle::relu_pattern(q, b.observation_matrix());
            const auto c = oracle::clip_pattern(q, b, adv, 0.2);
            p.insert(p.end(), c.begin(), c.end());
            return p;
          });
      CHECK(fd.max_rel_error < 1e-4);
    }
    const auto cobj = critic_objective(critic, b, 0.99);
    const auto fdc = oracle::finite_difference(
        critic, cobj.grad,
        [&](const nn::ParameterSet& q) { return critic_objective(q, b, 0.99).loss; },
        [&](const nn::ParameterSet& q) { return oracle::relu_pattern(q, b.observation_matrix()); });
    CHECK(fdc.max_rel_error < 1e-4);
  }
}

TEST_CASE("ppo_update takes exactly N_U steps and empties the buffer") {
  Rng rng(9);
  auto learner = make_learner(nn::initialize(kSmallActor, rng), nn::initialize(kSmallCritic, rng),
                              PpoConfig{});
  auto b = oracle::synthetic_batch(learner.actor, 2, 5, rng);
  int hooks = 0;
  Rng mb(1);
  const auto stats = ppo_update(learner, b, PpoConfig{}, mb, [&](int, const Learner&) { ++hooks; });
  CHECK(stats.actor_steps == 10);
  CHECK(stats.critic_steps == 10);
  CHECK(hooks == 10);
  CHECK(learner.actor_adam.step == 10);
  CHECK(b.empty());
  CHECK_THROWS_AS(ppo_update(learner, b, PpoConfig{}, mb), ContractError);
}

TEST_CASE("minibatch updates run and stay deterministic") {
  PpoConfig cfg;
  cfg.minibatch_size = 4;
  auto run = [&] {
    Rng rng(10);
    auto l = make_learner(nn::initialize(kSmallActor, rng), nn::initialize(kSmallCritic, rng), cfg);
    auto b = oracle::synthetic_batch(l.actor, 2, 5, rng);
    Rng mb(2);
    ppo_update(l, b, cfg, mb);
    return l.actor;
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
