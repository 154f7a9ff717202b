#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relict/app/config.hpp"
#include "relict/evaluation/evaluation.hpp"

namespace relict::app {

enum ExitCode : int { kOk = 0, kConfigError = 2, kMissingDependency = 3, kRuntimeFailure = 4 };

/// Maps library exceptions onto process exit codes.
int exit_code_for(const std::exception& e);

/// Command-line selections. Non-empty lists replace the config's lists.
struct CommandOptions {
  bool allow_any_k = false;
  bool force = false;  ///< evaluate/predict accept checkpoints from another config
  std::vector<std::string> frameworks;
  std::vector<std::string> architectures;
  std::vector<std::string> datasets;
  std::vector<int> k_values;
  std::optional<int> workers;
  bool verbose = false;  ///< progress lines on stderr
};

/// Artifact locations below the output root.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path labeled_dir() const { return root / "datasets" / "labeled"; }
  std::filesystem::path cluster_dir(int k) const { return root / "datasets" / ("cluster_k" + std::to_string(k)); }
  std::filesystem::path augmented_dir(const std::string& name) const { return root / "datasets" / name; }
  std::filesystem::path pretrain_dir(int k) const { return root / "pretrain" / ("k" + std::to_string(k)); }
  std::filesystem::path pretrain_weights(int k) const { return pretrain_dir(k) / "weights.ckpt"; }
  std::filesystem::path checkpoint_root() const { return root / "checkpoints"; }
  std::filesystem::path checkpoint_dir(const training::Combination& c) const {
    return checkpoint_root() / c.relative_dir();
  }
  std::filesystem::path final_weights(const training::Combination& c) const {
    return checkpoint_dir(c) / "weights.ckpt";
  }
  std::filesystem::path prediction_dir(const training::Combination& c) const {
    return root / "predictions" / c.relative_dir();
  }
  std::filesystem::path evaluation_dir(const training::Combination& c) const {
    return root / "evaluation" / c.relative_dir();
  }
  std::filesystem::path grid_dir() const { return root / "grid"; }
};

/// Every command returns a one-line JSON summary.
using Summary = nlohmann::json;

Summary cmd_synth(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_prepare_labeled(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_prepare_cluster(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_augment(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_pretrain(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_train(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_predict(const PipelineConfig& cfg, const CommandOptions& opts);
Summary cmd_evaluate(const PipelineConfig& cfg, const CommandOptions& opts);
/// Prepares missing or stale datasets, pre-trains, trains every selected
/// combination and writes the grid report. Artifacts whose config hash
/// matches are reused.
Summary cmd_grid(const PipelineConfig& cfg, const CommandOptions& opts);

const std::vector<std::string>& command_names();
Summary run_command(const std::string& name, const PipelineConfig& cfg, const CommandOptions& opts);

/// Combinations implied by the config and the option overrides.
std::vector<training::Combination> selected_combinations(const PipelineConfig& cfg, const CommandOptions& opts);

/// Loads the grid report written by `grid`.
std::string read_grid_csv(const PipelineConfig& cfg);

}  // namespace relict::app
