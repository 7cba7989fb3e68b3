#include "v2xmeta/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace v2xmeta::ppo {

void TrajectoryBatch::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  values.clear();
  dones.clear();
  episodes.clear();
}

namespace {

int sample_categorical(const Eigen::MatrixXd& logp, Eigen::Index col, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  double acc = 0.0;
  const Eigen::Index k = logp.rows();
  for (Eigen::Index i = 0; i < k; ++i) {
    acc += std::exp(logp(i, col));
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left the cumulative sum just below 1.
  for (Eigen::Index i = k - 1; i >= 0; --i)
    if (std::isfinite(logp(i, col))) return static_cast<int>(i);
  return static_cast<int>(k - 1);
}

Eigen::MatrixXd gather_columns(const TrajectoryBatch& batch, std::span<const std::size_t> rows) {
  const auto all = batch.observation_matrix();
  if (rows.empty()) return all;
  Eigen::MatrixXd out(all.rows(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = all.col(static_cast<Eigen::Index>(rows[j]));
  return out;
}

std::size_t record_at(std::span<const std::size_t> rows, std::size_t j) {
  return rows.empty() ? j : rows[j];
}

}  // namespace

TrajectoryBatch collect(Environment& env, const nn::ParameterSet& actor,
                        const nn::ParameterSet& critic, int n_traj, Rng& rng) {
  if (n_traj < 1) throw ContractError("collect: n_traj must be >= 1");
  const auto& task = env.task();
  const int d = task.observation_size();
  if (actor.architecture().inputs != d || actor.architecture().outputs != task.action_count())
    throw ContractError("collect: actor shape does not match the task");

  TrajectoryBatch batch;
  batch.observation_size = d;
  const int T = task.slots;

  for (int e = 0; e < n_traj; ++e) {
    if (env.state().done)
      env.next_episode();
    else if (env.state().slot != 0)
      throw ContractError("collect: environment is mid-episode");
    const int N = env.agents();
    const auto per_agent = static_cast<std::size_t>(T);

    std::vector<std::vector<double>> obs(static_cast<std::size_t>(N));
    std::vector<std::vector<int>> acts(static_cast<std::size_t>(N));
    std::vector<std::vector<double>> logps(static_cast<std::size_t>(N));
    std::vector<double> rewards;
    for (int n = 0; n < N; ++n) {
      obs[n].reserve(per_agent * d);
      acts[n].reserve(per_agent);
      logps[n].reserve(per_agent);
    }

    EpisodeStats stats;
    stats.links = N;
    auto current = env.observe_all();
    std::vector<ActionIndex> joint(static_cast<std::size_t>(N));
    StepResult r;
    do {
      const Eigen::MatrixXd logp = nn::log_softmax(nn::forward(actor, nn::to_matrix(current)));
      for (int n = 0; n < N; ++n) {
        const int a = sample_categorical(logp, n, rng);
        joint[n].index = a;
        obs[n].insert(obs[n].end(), current[n].features.begin(), current[n].features.end());
        acts[n].push_back(a);
        logps[n].push_back(logp(a, n));
      }
      r = env.step(joint);
      rewards.push_back(r.reward);
      stats.cumulative_reward += r.reward;
      for (double c : r.v2i_rate_bps) stats.v2i_sum_rate_bps += c;
      current = std::move(r.observations);
    } while (!r.done);
    const auto slots = rewards.size();
    stats.v2i_sum_rate_bps /= static_cast<double>(slots);
    for (bool s : r.success) stats.successes += s ? 1 : 0;

    for (int n = 0; n < N; ++n) {
      batch.observations.insert(batch.observations.end(), obs[n].begin(), obs[n].end());
      batch.actions.insert(batch.actions.end(), acts[n].begin(), acts[n].end());
      batch.log_probs.insert(batch.log_probs.end(), logps[n].begin(), logps[n].end());
      batch.rewards.insert(batch.rewards.end(), rewards.begin(), rewards.end());
      for (std::size_t t = 0; t < slots; ++t)
        batch.dones.push_back(t + 1 == slots ? 1 : 0);
    }
    batch.episodes.push_back(stats);
  }

  const Eigen::MatrixXd v = nn::forward(critic, batch.observation_matrix());
  batch.values.assign(v.data(), v.data() + v.size());
  return batch;
}

AdvantageRecord compute_gae(std::span<const double> rewards, std::span<const double> values,
                            std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw ContractError("compute_gae: inconsistent lengths");
  if (n > 0 && !dones[n - 1])
    throw ContractError("compute_gae: last record must terminate an episode");
  AdvantageRecord out;
  out.advantages.resize(n);
  out.td_errors.resize(n);
  out.returns.resize(n);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double next_v = dones[k] ? 0.0 : values[k + 1];
    const double delta = rewards[k] + gamma * next_v * live - values[k];
    const double adv = delta + gamma * lambda * live * next_adv;
    out.td_errors[k] = delta;
    out.advantages[k] = adv;
    out.returns[k] = adv + values[k];
    next_adv = adv;
  }
  return out;
}

AdvantageRecord compute_gae(const TrajectoryBatch& batch, double gamma, double lambda) {
  return compute_gae(batch.rewards, batch.values, batch.dones, gamma, lambda);
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

LossAndGrad actor_objective(const nn::ParameterSet& actor, const TrajectoryBatch& batch,
                            std::span<const double> advantages, double clip,
                            double entropy_coef, std::span<const std::size_t> records) {
  if (batch.empty()) throw ContractError("actor_objective: empty batch");
  if (advantages.size() != batch.size())
    throw ContractError("actor_objective: advantage count mismatch");
  const Eigen::MatrixXd x = gather_columns(batch, records);
  const auto B = static_cast<std::size_t>(x.cols());
  nn::ForwardCache cache;
  const Eigen::MatrixXd logp = nn::log_softmax(nn::forward(actor, x, &cache));
  const Eigen::MatrixXd p = logp.array().exp();

  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(logp.rows(), logp.cols());
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t j = 0; j < B; ++j) {
    const std::size_t i = record_at(records, j);
    const auto col = static_cast<Eigen::Index>(j);
    const int a = batch.actions[i];
    const double ratio = std::exp(logp(a, col) - batch.log_probs[i]);
    const double adv = advantages[i];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    total += std::min(unclipped, clipped);
    if (unclipped <= clipped) {
      // d(ratio A)/dz = ratio A (onehot(a) - p)
      const double g = ratio * adv * inv_b;
      dz.col(col) -= g * p.col(col);
      dz(a, col) += g;
    }
    if (entropy_coef != 0.0) {
      const double h = -(p.col(col).array() * logp.col(col).array()).sum();
      total += entropy_coef * h;
      dz.col(col).array() -=
          entropy_coef * inv_b * p.col(col).array() * (logp.col(col).array() + h);
    }
  }
  LossAndGrad out;
  out.loss = total * inv_b;
  out.grad = nn::backward(actor, cache, dz);
  return out;
}

double actor_loss(const nn::ParameterSet& actor, const TrajectoryBatch& batch,
                  std::span<const double> advantages, double clip) {
  const Eigen::MatrixXd logp =
      nn::log_softmax(nn::forward(actor, Eigen::MatrixXd(batch.observation_matrix())));
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double ratio =
        std::exp(logp(batch.actions[i], static_cast<Eigen::Index>(i)) - batch.log_probs[i]);
    total += clipped_surrogate(ratio, advantages[i], clip);
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrad critic_objective(const nn::ParameterSet& critic, const TrajectoryBatch& batch,
                             double gamma, std::span<const std::size_t> records) {
  if (batch.empty()) throw ContractError("critic_objective: empty batch");
  const Eigen::MatrixXd x = gather_columns(batch, records);
  const auto B = static_cast<std::size_t>(x.cols());
  nn::ForwardCache cache;
  const Eigen::MatrixXd v = nn::forward(critic, x, &cache);
  Eigen::MatrixXd dv(1, v.cols());
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t j = 0; j < B; ++j) {
    const std::size_t i = record_at(records, j);
    const double next = batch.dones[i] ? 0.0 : batch.values[i + 1];
    const double delta = batch.rewards[i] + gamma * next - v(0, static_cast<Eigen::Index>(j));
    total += delta * delta;
    dv(0, static_cast<Eigen::Index>(j)) = -2.0 * delta * inv_b;
  }
  LossAndGrad out;
  out.loss = total * inv_b;
  out.grad = nn::backward(critic, cache, dv);
  return out;
}

double critic_loss(const nn::ParameterSet& critic, const TrajectoryBatch& batch, double gamma) {
  const Eigen::MatrixXd v = nn::forward(critic, Eigen::MatrixXd(batch.observation_matrix()));
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double next = batch.dones[i] ? 0.0 : batch.values[i + 1];
    const double delta = batch.rewards[i] + gamma * next - v(0, static_cast<Eigen::Index>(i));
    total += delta * delta;
  }
  return total / static_cast<double>(batch.size());
}

Learner make_learner(nn::ParameterSet actor, nn::ParameterSet critic, const PpoConfig& config) {
  Learner l;
  l.actor_adam = nn::make_adam(actor, config.adam());
  l.critic_adam = nn::make_adam(critic, config.adam());
  l.actor = std::move(actor);
  l.critic = std::move(critic);
  return l;
}

UpdateStats ppo_update(Learner& learner, TrajectoryBatch& buffer, const PpoConfig& config,
                       Rng& rng, const StepHook& on_step) {
  if (buffer.empty()) throw ContractError("ppo_update: empty buffer");
  learner.actor_adam.config = config.adam();
  learner.critic_adam.config = config.adam();

  for (double& r : buffer.rewards) r *= config.reward_scale;
  const auto gae = compute_gae(buffer, config.gamma, config.gae_lambda);
  std::vector<double> adv = gae.advantages;
  if (config.normalize_advantages && adv.size() > 1) {
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / adv.size());
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  const std::size_t n = buffer.size();
  const bool minibatch = config.minibatch_size > 0 &&
                         static_cast<std::size_t>(config.minibatch_size) < n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  UpdateStats stats;
  for (int k = 0; k < config.updates; ++k) {
    std::vector<std::size_t> rows;
    if (minibatch) {
      std::shuffle(order.begin(), order.end(), rng);
      rows.assign(order.begin(), order.begin() + config.minibatch_size);
      std::sort(rows.begin(), rows.end());
    }
    auto a = actor_objective(learner.actor, buffer, adv, config.clip, config.entropy_coef, rows);
    auto c = critic_objective(learner.critic, buffer, config.gamma, rows);
    if (k == 0) {
      stats.actor_objective_first = a.loss;
      stats.critic_loss_first = c.loss;
    }
    stats.critic_loss_last = c.loss;
    a.grad *= -1.0;  // ascend
    nn::adam_step(learner.actor, a.grad, learner.actor_adam);
    nn::adam_step(learner.critic, c.grad, learner.critic_adam);
    ++stats.actor_steps;
    ++stats.critic_steps;
    if (on_step) on_step(k + 1, learner);
  }
  buffer.clear();
  return stats;
}

}  // namespace v2xmeta::ppo
