#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace v2xmeta {

using Rng = std::mt19937_64;

/// Named random streams fanned out from a single master seed.
///
/// Every consumer draws from its own stream, identified by a name and an
/// optional index path (outer loop, task slot, episode...). Two streams with
/// different names or indices never share state, so perturbing one component
/// leaves the others bit-identical.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }

  std::uint64_t derive(std::string_view name,
                       std::initializer_list<std::uint64_t> path = {}) const;

  Rng stream(std::string_view name,
             std::initializer_list<std::uint64_t> path = {}) const {
    return Rng(derive(name, path));
  }

  /// A child tree rooted at a derived seed.
  SeedTree child(std::string_view name,
                 std::initializer_list<std::uint64_t> path = {}) const {
    return SeedTree(derive(name, path));
  }

 private:
  std::uint64_t master_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

// Stream names used across the library.
namespace streams {
inline constexpr std::string_view kMobility = "mobility";
inline constexpr std::string_view kShadowing = "shadowing";
inline constexpr std::string_view kFading = "fading";
inline constexpr std::string_view kPolicy = "policy-sampling";
inline constexpr std::string_view kTasks = "task-sampling";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kCalibration = "calibration";
inline constexpr std::string_view kMinibatch = "minibatch";
}  // namespace streams

}  // namespace v2xmeta
