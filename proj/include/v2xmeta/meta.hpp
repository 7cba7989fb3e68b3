#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "v2xmeta/environment.hpp"
#include "v2xmeta/neuralnet.hpp"
#include "v2xmeta/ppo.hpp"

// Task distribution, inner-loop adaptation and the Reptile outer loop.
namespace v2xmeta::meta {

/// Grid values of the five task factors. Payload is given in multiples of
/// 1,060 bytes.
struct FactorGrid {
  std::string name;
  std::vector<int> links;
  std::vector<double> speeds_kmh;
  std::vector<double> payload_multiples;
  std::vector<double> k_v2i;
  std::vector<double> k_v2v;

  std::size_t size() const {
    return links.size() * speeds_kmh.size() * payload_multiples.size() * k_v2i.size() *
           k_v2v.size();
  }
};

/// Training grids with 72, 243 or 432 tasks. Throws ConfigError otherwise.
FactorGrid training_grid(int tasks);
/// 16 tasks off every training grid, used for meta-testing.
FactorGrid held_out_grid();
/// Grid used by the desk profile (2 values per factor, 32 tasks).
FactorGrid desk_grid();
/// Keeps every value of the factors flagged in `keep` (order: links, speed,
/// payload, K_v2i, K_v2v) and only the first value of the others.
FactorGrid sub_grid(const FactorGrid& grid, const std::array<bool, 5>& keep);

struct TaskSet {
  std::string provenance;
  FactorGrid grid;
  std::vector<TaskConfig> tasks;

  std::size_t size() const { return tasks.size(); }
};

/// Cartesian product in fixed order (links, speed, payload, K_v2i, K_v2v with
/// K_v2v varying fastest). Throws ConfigError on an empty factor.
TaskSet generate_task_set(const FactorGrid& grid, const TaskConfig& base = {});

/// Indices of n_task tasks. Without replacement (default) throws ConfigError
/// when n_task > |set|.
std::vector<std::size_t> sample_tasks(const TaskSet& set, int n_task, Rng& rng,
                                      bool with_replacement = false);

/// Number of factors in which `task` differs from every value of the grid
/// (a factor counts when its value is not on the grid).
int off_grid_factors(const FactorGrid& grid, const TaskConfig& task);

struct InnerResult {
  nn::ParameterSet actor;
  nn::ParameterSet critic;
  std::vector<ppo::EpisodeStats> episodes;
};

/// Called after every collection round with the round number (1-based), the
/// parameters after its update, and the episodes it collected.
using RoundHook = std::function<void(int round, const ppo::Learner&,
                                     std::span<const ppo::EpisodeStats>)>;

/// `iterations` rounds of collect(n_traj) + ppo_update starting from copies of
/// the given parameters. The inputs are never modified.
InnerResult inner_adapt(const TaskConfig& task, const nn::ParameterSet& actor,
                        const nn::ParameterSet& critic, int iterations,
                        const ppo::PpoConfig& config, std::uint64_t seed,
                        const RoundHook& on_round = {}, const ppo::StepHook& on_step = {});

/// psi + (epsilon / (N mu)) sum_j (psi_j - psi), summed in the given order.
/// Identical psi_j leave psi bit-identical. A single task with epsilon == mu
/// returns psi_1 exactly.
nn::ParameterSet reptile_update(const nn::ParameterSet& meta,
                                std::span<const nn::ParameterSet> adapted, double mu,
                                double epsilon);

struct MetaSchedule {
  int outer_loops = 200;  // N_out
  int tasks_per_loop = 20;  // N_task
  int inner_loops = 2;  // N_in
  double meta_step = 1e-4;  // epsilon
  bool with_replacement = false;
  std::vector<int> hidden = nn::kDefaultHidden;  // actor and critic hidden widths
  int jobs = 1;
  ppo::PpoConfig ppo;
};

struct EvalSnapshot {
  int outer_loop = 0;
  double mean_cumulative_reward = 0.0;
  double v2i_sum_rate_bps = 0.0;
  double v2v_success_probability = 0.0;
};

/// One training-curve row per sampled task per outer loop.
struct TrainingRow {
  int outer_loop = 0;
  std::size_t task_id = 0;
  double mean_cumulative_reward = 0.0;
  double v2i_sum_rate_bps = 0.0;
  double v2v_success_probability = 0.0;
};

struct MetaState {
  nn::ParameterSet actor;
  nn::ParameterSet critic;
  int outer_loop = 0;
  double mu = 3e-4;
  double epsilon = 1e-4;
  std::vector<EvalSnapshot> history;
};

struct MetaHooks {
  /// After every meta update; returning a snapshot appends it to the history.
  std::function<std::optional<EvalSnapshot>(const MetaState&)> evaluate;
  std::function<void(const TrainingRow&)> training_row;
  std::function<void(const MetaState&)> progress;
};

/// Random initialisation of the actor and critic for a task shape.
MetaState initial_state(const TaskConfig& shape, std::uint64_t seed,
                        const MetaSchedule& schedule);

/// Runs schedule.outer_loops Reptile updates starting from `state`.
MetaState meta_train(const TaskSet& set, const MetaSchedule& schedule, std::uint64_t seed,
                     MetaState state, const MetaHooks& hooks = {});

/// N_out scaled with |set| so every task is sampled about as often as in a
/// reference run with the same N_task.
int fair_outer_loops(std::size_t set_size, int reference_outer,
                     std::size_t reference_set_size);

nn::Checkpoint to_checkpoint(const MetaState& state, const TaskSet& set,
                             const MetaSchedule& schedule, std::uint64_t seed);

}  // namespace v2xmeta::meta
