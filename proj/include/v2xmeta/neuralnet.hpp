#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "v2xmeta/rng.hpp"

namespace v2xmeta {
struct Observation;
}

// Fully connected ReLU networks in float64, with the softmax policy head and
// scalar value head used by the actor and critic, plus Adam.
namespace v2xmeta::nn {

/// inputs -> hidden... -> outputs, ReLU on every hidden layer, linear output.
struct Architecture {
  int inputs = 0;
  std::vector<int> hidden;
  int outputs = 0;

  int layers() const { return static_cast<int>(hidden.size()) + 1; }
  int fan_in(int layer) const { return layer == 0 ? inputs : hidden[layer - 1]; }
  int fan_out(int layer) const {
    return layer == layers() - 1 ? outputs : hidden[layer];
  }
  std::size_t parameter_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline const std::vector<int> kDefaultHidden{500, 250, 120};

Architecture actor_architecture(int observation_size, int actions,
                                std::vector<int> hidden = kDefaultHidden);
Architecture critic_architecture(int observation_size,
                                 std::vector<int> hidden = kDefaultHidden);

/// Flat, ordered parameter vector. Layer l stores its weight matrix
/// (fan_out x fan_in, column-major) followed by its bias.
class ParameterSet {
 public:
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  ParameterSet() = default;
  /// All-zero parameters.
  explicit ParameterSet(Architecture arch);
  ParameterSet(Architecture arch, std::vector<double> values);

  const Architecture& architecture() const { return arch_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  VectorMap flat() { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }
  ConstVectorMap flat() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

  ConstMatrixMap weights(int layer) const;
  MatrixMap weights(int layer);
  ConstVectorMap bias(int layer) const;
  VectorMap bias(int layer);

  bool same_shape(const ParameterSet& other) const { return arch_ == other.arch_; }

  ParameterSet& operator+=(const ParameterSet& rhs);
  ParameterSet& operator-=(const ParameterSet& rhs);
  ParameterSet& operator*=(double s);

  friend ParameterSet operator+(ParameterSet lhs, const ParameterSet& rhs) { return lhs += rhs; }
  friend ParameterSet operator-(ParameterSet lhs, const ParameterSet& rhs) { return lhs -= rhs; }
  friend ParameterSet operator*(double s, ParameterSet p) { return p *= s; }

  /// Bitwise equality of architecture and every value.
  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

  /// FNV-1a over the raw bytes; used to check that buffers were not touched.
  std::uint64_t fingerprint() const;

 private:
  void check_same_shape(const ParameterSet& other) const;

  Architecture arch_;
  // Over-aligned so that Eigen's vectorised kernels see the same alignment
  // for every copy; otherwise peeling changes summation order with the heap
  // address and results stop being reproducible.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
};

/// He-uniform weights on hidden layers, U(-head_scale, head_scale) on the
/// output layer, zero biases.
ParameterSet initialize(const Architecture& arch, Rng& rng, double head_scale = 0.01);

/// Intermediate activations kept for backpropagation. activations[l] is the
/// input of layer l; activations.back() holds the linear outputs.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

/// Batched forward pass; one sample per column. Throws std::invalid_argument on
/// an input dimension mismatch.
Eigen::MatrixXd forward(const ParameterSet& params, const Eigen::MatrixXd& inputs,
                        ForwardCache* cache = nullptr);

/// Gradient of a scalar loss with respect to every parameter, given
/// dLoss/dOutputs (outputs x batch) and the cache of the matching forward pass.
ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Eigen::MatrixXd& output_grad);

/// Column-wise log-softmax with the max-shift for stability.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

Eigen::MatrixXd to_matrix(std::span<const Observation> observations);

/// Action probabilities for one observation.
std::vector<double> forward_actor(const ParameterSet& actor, const Observation& obs);
double forward_critic(const ParameterSet& critic, const Observation& obs);

// ---------------------------------------------------------------- Adam

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

AdamState make_adam(const ParameterSet& params, AdamConfig config);

/// Bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
/// Pass the negated gradient to ascend.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

// ---------------------------------------------------------------- checkpoints

inline constexpr int kCheckpointVersion = 1;

/// Actor and critic parameters with free-form metadata (task-set provenance,
/// schedule constants...). Stored as JSON text:
///   {"format": "v2xmeta-checkpoint", "version": 1, "kind": ...,
///    "actor":  {"architecture": {...}, "parameters": [...]},
///    "critic": {...}, "metadata": {...}}
struct Checkpoint {
  std::string kind;
  ParameterSet actor;
  ParameterSet critic;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const ParameterSet& params);
ParameterSet parameters_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace v2xmeta::nn
