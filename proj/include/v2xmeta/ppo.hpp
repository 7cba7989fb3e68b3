#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "v2xmeta/environment.hpp"
#include "v2xmeta/neuralnet.hpp"
#include "v2xmeta/rng.hpp"

// Inner-loop learner: rollout collection, GAE, clipped surrogate, TD critic.
namespace v2xmeta::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double learning_rate = 3e-4;  // mu
  int updates = 10;             // N_U
  int trajectories = 10;        // episodes per collection round
  int minibatch_size = 0;       // 0: full batch
  double entropy_coef = 0.0;
  bool normalize_advantages = true;
  /// Rewards are multiplied by this before GAE and critic targets, so the
  /// critic regresses values of order one.
  double reward_scale = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  nn::AdamConfig adam() const {
    return {learning_rate, adam_beta1, adam_beta2, adam_epsilon};
  }
};

/// Per-episode aggregates gathered while collecting.
struct EpisodeStats {
  double cumulative_reward = 0.0;
  double v2i_sum_rate_bps = 0.0;  // mean over slots of sum_a C_a
  int links = 0;
  int successes = 0;

  double success_probability() const {
    return links > 0 ? static_cast<double>(successes) / links : 0.0;
  }
};

/// Flat per-record storage. Within each episode, every agent contributes a
/// contiguous run of T records whose last one carries done = 1.
struct TrajectoryBatch {
  int observation_size = 0;
  std::vector<double> observations;  // record-major, observation_size each
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<EpisodeStats> episodes;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  void clear();

  Eigen::Map<const Eigen::MatrixXd> observation_matrix() const {
    return {observations.data(), observation_size, static_cast<Eigen::Index>(size())};
  }
};

/// Runs n_traj episodes with actions sampled from the actor. A finished
/// environment is advanced with next_episode(); a fresh one is used as is.
/// Values are filled with the critic after collection.
TrajectoryBatch collect(Environment& env, const nn::ParameterSet& actor,
                        const nn::ParameterSet& critic, int n_traj, Rng& rng);

struct AdvantageRecord {
  std::vector<double> advantages;
  std::vector<double> td_errors;
  std::vector<double> returns;  // advantage + value
};

/// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t) with logged values;
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
AdvantageRecord compute_gae(std::span<const double> rewards, std::span<const double> values,
                            std::span<const std::uint8_t> dones, double gamma, double lambda);
AdvantageRecord compute_gae(const TrajectoryBatch& batch, double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A) for one sample.
double clipped_surrogate(double ratio, double advantage, double clip);

struct LossAndGrad {
  double loss = 0.0;
  nn::ParameterSet grad;
};

/// Mean clipped surrogate (to maximise) over the listed records, plus
/// entropy_coef times the mean policy entropy. The gradient is that of the
/// objective itself (ascent direction).
LossAndGrad actor_objective(const nn::ParameterSet& actor, const TrajectoryBatch& batch,
                            std::span<const double> advantages, double clip,
                            double entropy_coef = 0.0,
                            std::span<const std::size_t> records = {});
double actor_loss(const nn::ParameterSet& actor, const TrajectoryBatch& batch,
                  std::span<const double> advantages, double clip);

/// Mean squared TD error (to minimise):
///   delta_t(w) = r_t + gamma V_logged(s_{t+1}) (1 - done_t) - V_w(s_t).
/// The bootstrap term uses the logged value and is not differentiated.
LossAndGrad critic_objective(const nn::ParameterSet& critic, const TrajectoryBatch& batch,
                             double gamma, std::span<const std::size_t> records = {});
double critic_loss(const nn::ParameterSet& critic, const TrajectoryBatch& batch, double gamma);

struct UpdateStats {
  int actor_steps = 0;
  int critic_steps = 0;
  double actor_objective_first = 0.0;
  double critic_loss_first = 0.0;
  double critic_loss_last = 0.0;
};

/// Optimiser state carried by a learner across collection rounds.
struct Learner {
  nn::ParameterSet actor;
  nn::ParameterSet critic;
  nn::AdamState actor_adam;
  nn::AdamState critic_adam;
};

Learner make_learner(nn::ParameterSet actor, nn::ParameterSet critic, const PpoConfig& config);

/// Called after each gradient step with the step number (1-based).
using StepHook = std::function<void(int step, const Learner&)>;

/// N_U Adam steps on the actor (ascent) and critic (descent) from one buffer,
/// which is emptied afterwards. Throws ContractError on an empty buffer.
UpdateStats ppo_update(Learner& learner, TrajectoryBatch& buffer, const PpoConfig& config,
                       Rng& rng, const StepHook& on_step = {});

}  // namespace v2xmeta::ppo
