#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2xmeta/environment.hpp"
#include "v2xmeta/meta.hpp"
#include "v2xmeta/neuralnet.hpp"
#include "v2xmeta/ppo.hpp"

// Adaptation stage, baseline policies and the headline metrics.
namespace v2xmeta::eval {

enum class PolicyKind { MetaInit, RandInit, Matched, Mismatched, Random, MaxV2V };

std::string to_string(PolicyKind kind);
/// Accepts "meta-init", "rand-init", "matched", "mismatched", "random", "maxV2V".
PolicyKind parse_policy_kind(const std::string& text);

struct PolicySpec {
  PolicyKind kind = PolicyKind::Random;
  std::string checkpoint;      // meta-init
  int train_episodes = 3000;   // matched / mismatched
  int adapt_episodes = 20;     // meta-init / rand-init
  std::optional<TaskConfig> training_task;  // matched / mismatched
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Joint decision rule for one slot.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ActionIndex> act(const Environment& env,
                                       std::span<const Observation> observations, Rng& rng) = 0;
};

/// argmax of the actor's distribution, per agent.
class GreedyPolicy : public Policy {
 public:
  GreedyPolicy(std::string name, nn::ParameterSet actor)
      : name_(std::move(name)), actor_(std::move(actor)) {}
  std::string name() const override { return name_; }
  std::vector<ActionIndex> act(const Environment& env, std::span<const Observation> obs,
                               Rng& rng) override;

 private:
  std::string name_;
  nn::ParameterSet actor_;
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::vector<ActionIndex> act(const Environment& env, std::span<const Observation> obs,
                               Rng& rng) override;
};

class MaxV2VPolicy : public Policy {
 public:
  explicit MaxV2VPolicy(std::int64_t budget = 1'000'000) : budget_(budget) {}
  std::string name() const override { return "maxV2V"; }
  std::vector<ActionIndex> act(const Environment& env, std::span<const Observation> obs,
                               Rng& rng) override;

 private:
  std::int64_t budget_;
};

/// Uniform over all actions, independently per agent.
std::vector<ActionIndex> random_policy(int agents, int actions, Rng& rng);

/// Joint action maximising the summed V2V rate of the slot under full CSI.
/// Joint index = sum_n action_n * M^(N-1-n); ties go to the lowest index.
/// Throws BudgetExceeded when M^N exceeds `budget`.
std::vector<ActionIndex> centralized_max_v2v(const LinkGains& gains, const TaskConfig& task,
                                             const PhysicalLayer& phy,
                                             std::int64_t budget = 1'000'000);

/// Summed V2V rate (bps) of a joint action on one slot.
double sum_v2v_rate(const LinkGains& gains, const TaskConfig& task, const PhysicalLayer& phy,
                    std::span<const ActionIndex> actions);

struct EpisodeRow {
  int episode = 0;
  double v2i_sum_rate_bps = 0.0;  // mean over slots
  double cumulative_reward = 0.0;
  std::vector<std::uint8_t> success;  // per V2V link
};

struct Summary {
  double mean = 0.0;
  double std_error = 0.0;
  double ci95 = 0.0;
  int count = 0;
};

Summary summarize(std::span<const double> values);

struct EvalReport {
  std::string policy;
  std::string task;
  std::uint64_t seed = 0;
  int seeds = 1;
  std::vector<EpisodeRow> rows;

  // Filled by finalize().
  Summary v2i_sum_rate;
  Summary success;  // over per-episode link-success fractions
  Summary reward;
  double success_probability = 0.0;  // mean of all link indicators

  void finalize();
};

/// Runs n_episodes consecutive episodes of `policy` on `task`. Every slot is
/// appended to `episode_log` when given (header not written).
EvalReport evaluate(Policy& policy, const TaskConfig& task, int n_episodes, std::uint64_t seed,
                    std::ostream* episode_log = nullptr);

/// Merges reports of the same (policy, task) into one, rows renumbered.
EvalReport merge(std::span<const EvalReport> reports);

/// Adaptation from a checkpoint: N_L rounds of the inner-loop machinery.
/// Throws ContractError when the checkpoint does not fit the task.
meta::InnerResult adapt(const nn::Checkpoint& init, const TaskConfig& task, int rounds,
                        const ppo::PpoConfig& config, std::uint64_t seed,
                        const meta::RoundHook& on_round = {},
                        const ppo::StepHook& on_step = {});

/// Fresh random actor and critic for the task shape.
nn::Checkpoint random_init(const TaskConfig& task, std::uint64_t seed,
                           const std::vector<int>& hidden = nn::kDefaultHidden);

/// PPO from random initialisation for `episodes` episodes (rounded up to whole
/// collection rounds).
nn::Checkpoint train_policy(const TaskConfig& task, int episodes, const ppo::PpoConfig& config,
                            std::uint64_t seed,
                            const std::vector<int>& hidden = nn::kDefaultHidden);

/// Task whose five factors each take the grid value farthest from `test`.
TaskConfig mismatched_task(const TaskConfig& test, const meta::FactorGrid& grid);

/// A task of the grid (first value of every factor) with `factors` of its
/// five factors moved off the grid, in the order payload, speed, K_v2v,
/// K_v2i, links. Numeric factors move half the grid range beyond its maximum;
/// links take the smallest feasible count missing from the grid.
TaskConfig distance_task(const meta::FactorGrid& grid, int factors, const TaskConfig& base = {});

/// Per-episode metrics recorded while adapting (stochastic actions).
struct AdaptationCurve {
  std::vector<double> reward;
  std::vector<double> v2i_sum_rate_bps;
  std::vector<double> success_probability;
};

AdaptationCurve adaptation_curve(const nn::Checkpoint& init, const TaskConfig& task, int rounds,
                                 const ppo::PpoConfig& config, std::uint64_t seed);

/// Episodes needed until the mean over a block of `block` episodes first
/// reaches fraction x the mean of the last `final_window` episodes. Returns
/// the episode count at the end of that block.
int episodes_to_fraction(std::span<const double> per_episode, int block, double fraction,
                         int final_window);

}  // namespace v2xmeta::eval
