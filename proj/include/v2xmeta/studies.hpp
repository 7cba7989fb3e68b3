#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <functional>
#include <string>
#include <vector>

#include "v2xmeta/config.hpp"
#include "v2xmeta/evaluation.hpp"

// Run orchestration behind the command line: one entry point per mode. Every
// run writes its artifacts plus manifest.json into cfg.out.
namespace v2xmeta::studies {

using Log = std::function<void(const std::string&)>;

struct RunOutputs {
  std::vector<std::string> files;  // relative to cfg.out
};

/// meta_checkpoint.json, fig2.csv, training_curve.csv
RunOutputs run_meta_train(const RunConfig& cfg, const Log& log = {});
/// adapted_checkpoint.json, training_curve.csv
RunOutputs run_adapt(const RunConfig& cfg, const Log& log = {});
/// evaluation.csv, episodes.csv, episode_log_<policy>.csv
RunOutputs run_evaluate(const RunConfig& cfg, const Log& log = {});
/// calibration.csv
RunOutputs run_calibrate(const RunConfig& cfg, const Log& log = {});
/// fig3.csv | fig45.csv | fig67.csv
RunOutputs run_study(const RunConfig& cfg, const Log& log = {});

/// Validates, dispatches on cfg.mode and writes the manifest.
RunOutputs run(const RunConfig& cfg, const Log& log = {});

/// Builds a ready-to-evaluate policy for one seed. `meta_init` is required for
/// meta-init; `grid` picks the mismatched training task.
std::unique_ptr<eval::Policy> build_policy(eval::PolicyKind kind, const RunConfig& cfg,
                                           const TaskConfig& task, std::uint64_t seed,
                                           const nn::Checkpoint* meta_init,
                                           const meta::FactorGrid& grid);

/// Training grid recorded in a meta checkpoint, if any.
std::optional<meta::FactorGrid> checkpoint_grid(const nn::Checkpoint& ckpt);

}  // namespace v2xmeta::studies
