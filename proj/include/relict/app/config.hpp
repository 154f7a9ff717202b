#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relict/models/network.hpp"
#include "relict/raster/tiling.hpp"
#include "relict/synthetic/synthetic.hpp"
#include "relict/training/training.hpp"

namespace relict::app {

/// Environment variable that replaces the configured output root.
inline constexpr const char* kOutputRootEnv = "RELICT_OUTPUT_ROOT";

struct Seeds {
  std::uint64_t kmeans = 11;
  std::uint64_t balance = 12;
  std::uint64_t augment = 13;
  std::uint64_t model = 14;
  bool operator==(const Seeds&) const = default;
};

struct KMeansSettings {
  int max_iter = 300;
  double tol = 1e-4;
  bool standardize = false;
  std::size_t max_samples = 2'000'000;
  /// 0: every cluster must label at least one tile. Otherwise clusters
  /// labeling fewer tiles are left out of the balanced dataset.
  std::size_t drop_classes_below = 0;
  bool operator==(const KMeansSettings&) const = default;
};

struct SyntheticSettings {
  synthetic::SceneSpec spec;
  int scene_count = 1;  ///< the first scene is labeled, all feed clustering
  bool operator==(const SyntheticSettings&) const = default;
};

/// Declarative description of a full pipeline run. Relative paths are
/// resolved against the config file's directory.
struct PipelineConfig {
  std::filesystem::path output_root = "output";
  /// Scene used for the labeled dataset and evaluation. Defaults to the
  /// first synthetic scene when a synthetic block is present.
  std::optional<std::filesystem::path> labeled_scene;
  /// Landslide inventory: GeoJSON polygons or a 0/1 mask raster.
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> void_regions;
  /// Scenes pooled for clustering; defaults to the labeled scene.
  std::vector<std::filesystem::path> cluster_scenes;
  int tile_size = 32;
  raster::PadMode pad_mode = raster::PadMode::zero_pad;
  double split_ratio = 0.7;
  std::vector<int> k_values{2, 4, 6, 8, 10, 12};
  std::map<std::string, int> augmentation{{"LD30", 30}, {"LD50", 50}};
  std::vector<training::Framework> frameworks{training::Framework::standard, training::Framework::proposed};
  std::vector<models::Architecture> architectures{models::Architecture::unet, models::Architecture::fpn,
                                                  models::Architecture::linknet};
  std::string encoder_preset = "full";
  double input_scale = 1.0 / 1024.0;
  KMeansSettings kmeans;
  training::TrainConfig pretrain;
  training::TrainConfig finetune;
  double threshold = 0.5;
  Seeds seeds;
  int workers = 1;
  std::optional<SyntheticSettings> synthetic;

  models::EncoderSpec encoder() const;
  /// Throws ConfigError. k values outside 2..12 sweep are rejected unless
  /// allow_any_k.
  void validate(bool allow_any_k = false) const;
  /// Canonical form: every field present, paths as given.
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON, ignoring output_root and workers.
  std::string hash() const;

  // Resolved inputs (synthetic defaults filled in).
  std::filesystem::path labeled_scene_path() const;
  std::filesystem::path labels_path() const;
  std::vector<std::filesystem::path> cluster_scene_paths() const;
  std::filesystem::path synthetic_scene_path(int index) const;
  std::filesystem::path synthetic_mask_path() const;
  std::filesystem::path synthetic_confounder_path() const;

  bool operator==(const PipelineConfig&) const = default;
};

/// Parses the file, resolves relative paths against its directory and
/// applies the output-root environment override.
PipelineConfig load_config(const std::filesystem::path& path, bool use_env = true);

}  // namespace relict::app
