#include "v2xmeta/neuralnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "v2xmeta/environment.hpp"

namespace v2xmeta::nn {

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  for (int l = 0; l < layers(); ++l)
    total += static_cast<std::size_t>(fan_out(l)) * (static_cast<std::size_t>(fan_in(l)) + 1);
  return total;
}

Architecture actor_architecture(int observation_size, int actions, std::vector<int> hidden) {
  return {observation_size, std::move(hidden), actions};
}

Architecture critic_architecture(int observation_size, std::vector<int> hidden) {
  return {observation_size, std::move(hidden), 1};
}

// ------------------------------------------------------------------ ParameterSet

ParameterSet::ParameterSet(Architecture arch)
    : ParameterSet(arch, std::vector<double>(arch.parameter_count(), 0.0)) {}

ParameterSet::ParameterSet(Architecture arch, std::vector<double> values)
    : arch_(std::move(arch)), values_(values.begin(), values.end()) {
  if (values_.size() != arch_.parameter_count())
    throw std::invalid_argument("ParameterSet: value count does not match architecture");
  std::size_t offset = 0;
  for (int l = 0; l < arch_.layers(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(arch_.fan_out(l)) *
              (static_cast<std::size_t>(arch_.fan_in(l)) + 1);
  }
}

ParameterSet::ConstMatrixMap ParameterSet::weights(int l) const {
  return {values_.data() + offsets_[l], arch_.fan_out(l), arch_.fan_in(l)};
}
ParameterSet::MatrixMap ParameterSet::weights(int l) {
  return {values_.data() + offsets_[l], arch_.fan_out(l), arch_.fan_in(l)};
}
ParameterSet::ConstVectorMap ParameterSet::bias(int l) const {
  const auto start = offsets_[l] + static_cast<std::size_t>(arch_.fan_out(l) * arch_.fan_in(l));
  return {values_.data() + start, arch_.fan_out(l)};
}
ParameterSet::VectorMap ParameterSet::bias(int l) {
  const auto start = offsets_[l] + static_cast<std::size_t>(arch_.fan_out(l) * arch_.fan_in(l));
  return {values_.data() + start, arch_.fan_out(l)};
}

void ParameterSet::check_same_shape(const ParameterSet& other) const {
  if (!same_shape(other)) throw std::invalid_argument("ParameterSet: shape mismatch");
}

ParameterSet& ParameterSet::operator+=(const ParameterSet& rhs) {
  check_same_shape(rhs);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
  return *this;
}

ParameterSet& ParameterSet::operator-=(const ParameterSet& rhs) {
  check_same_shape(rhs);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
  return *this;
}

ParameterSet& ParameterSet::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  return a.arch_ == b.arch_ && a.values_.size() == b.values_.size() &&
         std::memcmp(a.values_.data(), b.values_.data(),
                     a.values_.size() * sizeof(double)) == 0;
}

std::uint64_t ParameterSet::fingerprint() const {
  return fnv1a64({reinterpret_cast<const char*>(values_.data()),
                  values_.size() * sizeof(double)});
}

ParameterSet initialize(const Architecture& arch, Rng& rng, double head_scale) {
  ParameterSet p(arch);
  for (int l = 0; l < arch.layers(); ++l) {
    const bool head = l == arch.layers() - 1;
    const double bound = head ? head_scale : std::sqrt(6.0 / arch.fan_in(l));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = p.weights(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  }
  return p;
}

// ------------------------------------------------------------------ forward / backward

Eigen::MatrixXd forward(const ParameterSet& params, const Eigen::MatrixXd& inputs,
                        ForwardCache* cache) {
  const auto& arch = params.architecture();
  if (inputs.rows() != arch.inputs)
    throw std::invalid_argument("forward: expected " + std::to_string(arch.inputs) +
                                " inputs, got " + std::to_string(inputs.rows()));
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(inputs);
  }
  Eigen::MatrixXd x = inputs;
  for (int l = 0; l < arch.layers(); ++l) {
    Eigen::MatrixXd z = params.weights(l) * x;
    z.colwise() += params.bias(l);
    if (l < arch.layers() - 1) z = z.cwiseMax(0.0);
    x = std::move(z);
    if (cache) cache->activations.push_back(x);
  }
  return x;
}

ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Eigen::MatrixXd& output_grad) {
  const auto& arch = params.architecture();
  if (static_cast<int>(cache.activations.size()) != arch.layers() + 1)
    throw std::invalid_argument("backward: cache does not match the network");
  ParameterSet grad(arch);
  Eigen::MatrixXd delta = output_grad;
  for (int l = arch.layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = cache.activations[static_cast<std::size_t>(l)];
    grad.weights(l).noalias() = delta * input.transpose();
    grad.bias(l) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = params.weights(l).transpose() * delta;
      delta = (input.array() > 0.0).select(back, 0.0);
    }
  }
  return grad;
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

Eigen::MatrixXd to_matrix(std::span<const Observation> observations) {
  if (observations.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(observations.front().features.size());
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(observations.size()));
  for (std::size_t j = 0; j < observations.size(); ++j) {
    if (static_cast<Eigen::Index>(observations[j].features.size()) != dim)
      throw std::invalid_argument("to_matrix: ragged observations");
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXd>(observations[j].features.data(), dim);
  }
  return m;
}

std::vector<double> forward_actor(const ParameterSet& actor, const Observation& obs) {
  const Eigen::Map<const Eigen::VectorXd> x(obs.features.data(),
                                            static_cast<Eigen::Index>(obs.features.size()));
  const Eigen::MatrixXd logp = log_softmax(forward(actor, Eigen::MatrixXd(x)));
  std::vector<double> p(static_cast<std::size_t>(logp.rows()));
  for (Eigen::Index i = 0; i < logp.rows(); ++i) p[static_cast<std::size_t>(i)] = std::exp(logp(i, 0));
  return p;
}

double forward_critic(const ParameterSet& critic, const Observation& obs) {
  const Eigen::Map<const Eigen::VectorXd> x(obs.features.data(),
                                            static_cast<Eigen::Index>(obs.features.size()));
  return forward(critic, Eigen::MatrixXd(x))(0, 0);
}

// ------------------------------------------------------------------ Adam

AdamState make_adam(const ParameterSet& params, AdamConfig config) {
  return {config, std::vector<double>(params.size(), 0.0),
          std::vector<double>(params.size(), 0.0), 0};
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& s) {
  if (!params.same_shape(grads) || s.m.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  s.step += 1;
  const auto& c = s.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  auto p = params.values();
  const auto g = grads.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

// ------------------------------------------------------------------ checkpoints

nlohmann::json to_json(const ParameterSet& params) {
  const auto& a = params.architecture();
  nlohmann::json j;
  j["architecture"] = {{"inputs", a.inputs},
                       {"hidden", a.hidden},
                       {"outputs", a.outputs},
                       {"activation", "relu"},
                       {"layout", "per layer: weights (out x in, column-major) then bias"}};
  j["parameters"] = std::vector<double>(params.values().begin(), params.values().end());
  return j;
}

ParameterSet parameters_from_json(const nlohmann::json& j) {
  const auto& a = j.at("architecture");
  Architecture arch{a.at("inputs").get<int>(), a.at("hidden").get<std::vector<int>>(),
                    a.at("outputs").get<int>()};
  return ParameterSet(arch, j.at("parameters").get<std::vector<double>>());
}

nlohmann::json to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "v2xmeta-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = ckpt.kind;
  j["actor"] = to_json(ckpt.actor);
  j["critic"] = to_json(ckpt.critic);
  j["metadata"] = ckpt.metadata;
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "v2xmeta-checkpoint")
    throw std::runtime_error("not a v2xmeta checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(j.at("version").get<int>()));
  Checkpoint c;
  c.kind = j.at("kind").get<std::string>();
  c.actor = parameters_from_json(j.at("actor"));
  c.critic = parameters_from_json(j.at("critic"));
  c.metadata = j.value("metadata", nlohmann::json::object());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json(ckpt).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace v2xmeta::nn
