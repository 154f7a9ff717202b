#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relict/datasets/datasets.hpp"
#include "relict/models/checkpoint.hpp"

namespace relict::training {

enum class OptimizerKind { adam, sgd };
enum class LossKind { pixel_bce, categorical_ce };
enum class Device { cpu, accelerator };

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 300;
  int batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  /// Defaults per loop: categorical CE for pre-training, pixel BCE otherwise.
  std::optional<LossKind> loss;
  Device device = Device::cpu;
  int checkpoint_every = 25;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  ///< pixel accuracy (segmentation) or tile accuracy (pre-training)
  double seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  std::string final_checksum;

  /// Loss/accuracy trajectory and checksum; timings excluded.
  bool same_trajectory(const TrainRecord& other) const;
  nlohmann::json to_json() const;
};

/// Called after epoch `epoch` when a checkpoint is due.
using CheckpointSink = std::function<void(int epoch, const models::Network& net)>;

/// Adam (Keras defaults: beta1 0.9, beta2 0.999, eps 1e-7) or plain SGD.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::vector<nn::Var> params);
  void step();

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<nn::Var> params_;
  std::vector<nn::Tensor> m_, v_;
  long t_ = 0;
};

/// Cluster pre-training: categorical cross-entropy over seeded mini-batches.
TrainRecord pretrain(models::Network& classifier, const std::vector<datasets::ClusterTile>& tiles,
                     const TrainConfig& config, const CheckpointSink& sink = {});

/// Segmentation fine-tuning: per-pixel binary cross-entropy over valid pixels.
/// Throws NumericalError naming the batch when the loss becomes non-finite.
TrainRecord train_segmenter(models::Network& model, const std::vector<datasets::LabeledTile>& tiles,
                            const TrainConfig& config, const CheckpointSink& sink = {});

/// Pixel accuracy (threshold 0.5) of a segmenter on labeled tiles in inference mode.
double pixel_accuracy(models::Network& model, const std::vector<datasets::LabeledTile>& tiles, int batch_size = 32);

// ---- framework composition ----------------------------------------------

enum class Framework { standard, proposed };

std::string to_string(Framework f);
Framework framework_from_string(const std::string& s);

/// Cluster counts the experiment grid sweeps.
inline const std::vector<int> kSweepClusterCounts{2, 4, 6, 8, 10, 12};

struct Combination {
  Framework framework = Framework::standard;
  models::Architecture arch = models::Architecture::unet;
  std::optional<int> k;
  std::string dataset = "LD30";

  /// Checkpoint sub-path: <framework>/<arch>/k<k|na>/<dataset>.
  std::filesystem::path relative_dir() const;
  std::string label() const;
  /// proposed needs k (restricted to kSweepClusterCounts unless allow_any_k);
  /// standard forbids it.
  void validate(bool allow_any_k = false) const;
  bool operator==(const Combination&) const = default;
};

/// Sorted (framework, arch, k, dataset) cross product; standard entries carry
/// no k.
std::vector<Combination> enumerate_combinations(const std::vector<Framework>& frameworks,
                                                const std::vector<models::Architecture>& archs,
                                                const std::vector<int>& ks,
                                                const std::vector<std::string>& datasets);

bool combination_less(const Combination& a, const Combination& b);

struct FrameworkInputs {
  const std::vector<datasets::LabeledTile>* train_tiles = nullptr;
  /// Used for the proposed framework when `pretrained` is absent.
  const std::vector<datasets::ClusterTile>* cluster_tiles = nullptr;
  const models::ParameterStore* pretrained = nullptr;
  models::EncoderSpec encoder = models::EncoderSpec::tiny();
  double input_scale = 1.0 / 1024.0;
  std::uint64_t model_seed = 0;
  TrainConfig pretrain;
  TrainConfig finetune;
  bool allow_any_k = false;
  /// When set, checkpoints land in <root>/<relative_dir>/epoch_<n>/weights.ckpt.
  std::optional<std::filesystem::path> checkpoint_root;
  nlohmann::json provenance = nlohmann::json::object();
};

struct FrameworkResult {
  models::Checkpoint checkpoint;
  TrainRecord record;
  std::optional<TrainRecord> pretrain_record;
  std::uint64_t initial_encoder_checksum = 0;  ///< segmenter encoder before the first update
};

/// Runs one classifier pre-training for `k` cluster classes and returns its
/// parameter store.
models::ParameterStore run_pretrain(int k, const std::vector<datasets::ClusterTile>& tiles,
                                    const models::EncoderSpec& encoder, double input_scale, std::uint64_t model_seed,
                                    const TrainConfig& config, TrainRecord* record = nullptr,
                                    const CheckpointSink& sink = {});

/// standard: random encoder -> train_segmenter. proposed: pretrain (or the
/// supplied store) -> transfer_encoder -> train_segmenter. Provenance is
/// embedded in the returned checkpoint.
FrameworkResult run_framework(const Combination& combo, const FrameworkInputs& inputs);

std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& dir, int epoch);
/// Sink writing <dir>/epoch_<n>/weights.ckpt.
CheckpointSink directory_sink(const std::filesystem::path& dir, nlohmann::json provenance);

}  // namespace relict::training
