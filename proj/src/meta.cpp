#include "v2xmeta/meta.hpp"

#include "v2xmeta/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace v2xmeta::meta {

FactorGrid training_grid(int tasks) {
  switch (tasks) {
    case 72:
      return {"72-grid", {1, 3}, {10, 20, 30}, {2, 4, 6}, {10, 20}, {0, 6}};
    case 243:
      return {"243-grid", {1, 2, 3}, {10, 20, 30}, {2, 4, 6}, {10, 15, 20}, {0, 3, 6}};
    case 432:
      return {"432-grid",
              {1, 2, 3},
              {10, 20, 30},
              {2, 4, 6},
              {10, 40.0 / 3.0, 50.0 / 3.0, 20},
              {0, 2, 4, 6}};
    default:
      throw ConfigError("no training grid with " + std::to_string(tasks) +
                        " tasks (choose 72, 243 or 432)");
  }
}

FactorGrid held_out_grid() {
  return {"held-out-16", {1, 2}, {15, 25}, {3, 5}, {12.5, 17.5}, {4.5}};
}

FactorGrid desk_grid() {
  return {"desk-32", {1, 2}, {10, 30}, {2, 6}, {10, 20}, {0, 6}};
}

FactorGrid sub_grid(const FactorGrid& grid, const std::array<bool, 5>& keep) {
  auto cut = [](auto values, bool all) {
    if (!all && !values.empty()) values.resize(1);
    return values;
  };
  FactorGrid g{grid.name, cut(grid.links, keep[0]), cut(grid.speeds_kmh, keep[1]),
               cut(grid.payload_multiples, keep[2]), cut(grid.k_v2i, keep[3]),
               cut(grid.k_v2v, keep[4])};
  g.name = grid.name + "-sub" + std::to_string(g.size());
  return g;
}

TaskSet generate_task_set(const FactorGrid& grid, const TaskConfig& base) {
  if (grid.links.empty() || grid.speeds_kmh.empty() || grid.payload_multiples.empty() ||
      grid.k_v2i.empty() || grid.k_v2v.empty())
    throw ConfigError("task grid '" + grid.name + "' has an empty factor");
  TaskSet set;
  set.provenance = grid.name;
  set.grid = grid;
  set.tasks.reserve(grid.size());
  for (int l : grid.links)
    for (double v : grid.speeds_kmh)
      for (double p : grid.payload_multiples)
        for (double ki : grid.k_v2i)
          for (double kv : grid.k_v2v) {
            auto t = with_factors(base, l, p, v, ki, kv);
            t.validate();
            set.tasks.push_back(std::move(t));
          }
  return set;
}

std::vector<std::size_t> sample_tasks(const TaskSet& set, int n_task, Rng& rng,
                                      bool with_replacement) {
  if (n_task < 0) throw ConfigError("N_task must be non-negative");
  if (set.tasks.empty()) throw ConfigError("cannot sample from an empty task set");
  const auto n = static_cast<std::size_t>(n_task);
  if (with_replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pick(rng);
    return out;
  }
  if (n > set.size())
    throw ConfigError("N_task = " + std::to_string(n_task) + " exceeds the task set size " +
                      std::to_string(set.size()));
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

int off_grid_factors(const FactorGrid& grid, const TaskConfig& task) {
  auto on = [](const auto& values, double x) {
    return std::any_of(values.begin(), values.end(),
                       [&](auto v) { return std::abs(static_cast<double>(v) - x) < 1e-9; });
  };
  int off = 0;
  off += on(grid.links, task.links_per_vehicle) ? 0 : 1;
  off += on(grid.speeds_kmh, task.speed_kmh) ? 0 : 1;
  off += on(grid.payload_multiples, task.payload_multiple()) ? 0 : 1;
  off += on(grid.k_v2i, task.ricean_k_v2i) ? 0 : 1;
  off += on(grid.k_v2v, task.ricean_k_v2v) ? 0 : 1;
  return off;
}

InnerResult inner_adapt(const TaskConfig& task, const nn::ParameterSet& actor,
                        const nn::ParameterSet& critic, int iterations,
                        const ppo::PpoConfig& config, std::uint64_t seed,
                        const RoundHook& on_round, const ppo::StepHook& on_step) {
  if (iterations < 0) throw ConfigError("iteration count must be non-negative");
  const SeedTree tree(seed);
  auto learner = ppo::make_learner(actor, critic, config);
  InnerResult out;
  if (iterations == 0) {
    out.actor = learner.actor;
    out.critic = learner.critic;
    return out;
  }
  Environment env(task, tree.derive("environment"));
  Rng policy_rng = tree.stream(streams::kPolicy);
  Rng minibatch_rng = tree.stream(streams::kMinibatch);
  for (int k = 1; k <= iterations; ++k) {
    auto batch = ppo::collect(env, learner.actor, learner.critic, config.trajectories,
                              policy_rng);
    const auto episodes = batch.episodes;
    out.episodes.insert(out.episodes.end(), episodes.begin(), episodes.end());
    ppo::ppo_update(learner, batch, config, minibatch_rng, on_step);
    if (on_round) on_round(k, learner, episodes);
  }
  out.actor = std::move(learner.actor);
  out.critic = std::move(learner.critic);
  return out;
}

nn::ParameterSet reptile_update(const nn::ParameterSet& meta,
                                std::span<const nn::ParameterSet> adapted, double mu,
                                double epsilon) {
  if (adapted.empty()) return meta;
  for (const auto& p : adapted)
    if (!p.same_shape(meta)) throw std::invalid_argument("reptile_update: shape mismatch");
  if (!(mu > 0.0)) throw ConfigError("reptile_update: mu must be positive");
  const double n = static_cast<double>(adapted.size());
  const auto m = meta.values();
  nn::ParameterSet out = meta;
  auto o = out.values();

  // Unit step with one task: psi_1 itself, free of the round trip through
  // psi + (psi_1 - psi).
  if (adapted.size() == 1 && epsilon == mu) return adapted.front();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double s = 0.0;
    for (const auto& p : adapted) s += p.values()[i] - m[i];
    o[i] = m[i] + (epsilon * s) / (n * mu);
  }
  return out;
}

MetaState initial_state(const TaskConfig& shape, std::uint64_t seed,
                        const MetaSchedule& schedule) {
  const SeedTree tree(seed);
  Rng init = tree.stream(streams::kInit);
  MetaState s;
  s.actor = nn::initialize(
      nn::actor_architecture(shape.observation_size(), shape.action_count(), schedule.hidden),
      init);
  s.critic = nn::initialize(nn::critic_architecture(shape.observation_size(), schedule.hidden), init);
  s.mu = schedule.ppo.learning_rate;
  s.epsilon = schedule.meta_step;
  return s;
}

namespace {

double mean_of(std::span<const ppo::EpisodeStats> eps, double (*field)(const ppo::EpisodeStats&)) {
  if (eps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : eps) s += field(e);
  return s / static_cast<double>(eps.size());
}

}  // namespace

MetaState meta_train(const TaskSet& set, const MetaSchedule& schedule, std::uint64_t seed,
                     MetaState state, const MetaHooks& hooks) {
  if (schedule.outer_loops < 0 || schedule.inner_loops < 0 || schedule.tasks_per_loop < 1)
    throw ConfigError("invalid meta schedule");
  if (!schedule.with_replacement &&
      static_cast<std::size_t>(schedule.tasks_per_loop) > set.size())
    throw ConfigError("N_task = " + std::to_string(schedule.tasks_per_loop) +
                      " exceeds the task set size " + std::to_string(set.size()));
  const SeedTree tree(seed);
  state.mu = schedule.ppo.learning_rate;
  state.epsilon = schedule.meta_step;

  for (int loop = 0; loop < schedule.outer_loops; ++loop) {
    const int outer = state.outer_loop + 1;
    Rng task_rng = tree.stream(streams::kTasks, {static_cast<std::uint64_t>(outer)});
    auto picked = sample_tasks(set, schedule.tasks_per_loop, task_rng, schedule.with_replacement);
    // Fixed reduction order: by task id, then by occurrence.
    std::sort(picked.begin(), picked.end());
    std::vector<std::uint64_t> occurrence(picked.size(), 0);
    for (std::size_t i = 1; i < picked.size(); ++i)
      if (picked[i] == picked[i - 1]) occurrence[i] = occurrence[i - 1] + 1;

    std::vector<InnerResult> results(picked.size());
    parallel_for(picked.size(), schedule.jobs, [&](std::size_t i) {
      const auto inner_seed =
          tree.derive("inner", {static_cast<std::uint64_t>(outer), picked[i], occurrence[i]});
      results[i] = inner_adapt(set.tasks[picked[i]], state.actor, state.critic,
                               schedule.inner_loops, schedule.ppo, inner_seed);
    });

    std::vector<nn::ParameterSet> actors, critics;
    actors.reserve(results.size());
    critics.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (hooks.training_row) {
        const auto& eps = results[i].episodes;
        hooks.training_row(
            {outer, picked[i],
             mean_of(eps, [](const ppo::EpisodeStats& e) { return e.cumulative_reward; }),
             mean_of(eps, [](const ppo::EpisodeStats& e) { return e.v2i_sum_rate_bps; }),
             mean_of(eps, [](const ppo::EpisodeStats& e) { return e.success_probability(); })});
      }
      actors.push_back(std::move(results[i].actor));
      critics.push_back(std::move(results[i].critic));
    }
    state.actor = reptile_update(state.actor, actors, state.mu, state.epsilon);
    state.critic = reptile_update(state.critic, critics, state.mu, state.epsilon);
    state.outer_loop = outer;

    if (hooks.evaluate)
      if (auto snap = hooks.evaluate(state)) state.history.push_back(*snap);
    if (hooks.progress) hooks.progress(state);
  }
  return state;
}

int fair_outer_loops(std::size_t set_size, int reference_outer, std::size_t reference_set_size) {
  if (reference_set_size == 0) throw ConfigError("reference set size must be positive");
  const double scaled = static_cast<double>(reference_outer) * static_cast<double>(set_size) /
                        static_cast<double>(reference_set_size);
  return std::max(1, static_cast<int>(std::lround(scaled)));
}

nn::Checkpoint to_checkpoint(const MetaState& state, const TaskSet& set,
                             const MetaSchedule& schedule, std::uint64_t seed) {
  nn::Checkpoint c;
  c.kind = "meta";
  c.actor = state.actor;
  c.critic = state.critic;
  const auto& g = set.grid;
  c.metadata = {
      {"task_set",
       {{"provenance", set.provenance},
        {"size", set.size()},
        {"links", g.links},
        {"speed_kmh", g.speeds_kmh},
        {"payload_multiple", g.payload_multiples},
        {"k_v2i", g.k_v2i},
        {"k_v2v", g.k_v2v}}},
      {"schedule",
       {{"outer_loops", schedule.outer_loops},
        {"tasks_per_loop", schedule.tasks_per_loop},
        {"inner_loops", schedule.inner_loops},
        {"trajectories", schedule.ppo.trajectories},
        {"updates", schedule.ppo.updates},
        {"mu", state.mu},
        {"epsilon", state.epsilon},
        {"with_replacement", schedule.with_replacement}}},
      {"outer_loop", state.outer_loop},
      {"seed", seed}};
  return c;
}

}  // namespace v2xmeta::meta
