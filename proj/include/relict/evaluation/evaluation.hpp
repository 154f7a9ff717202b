#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relict/models/checkpoint.hpp"
#include "relict/raster/tiling.hpp"
#include "relict/training/training.hpp"

namespace relict::evaluation {

struct PredictionRaster {
  int width = 0;
  int height = 0;
  double threshold = 0.5;
  std::vector<double> probabilities;  ///< height x width
  std::vector<std::uint8_t> binary;   ///< 1 iff probability > threshold
  std::vector<std::uint8_t> valid;    ///< 0 for void pixels and pixels outside the tiled extent
  nlohmann::json provenance = nlohmann::json::object();
};

/// binary[p] = probabilities[p] > threshold (strict).
std::vector<std::uint8_t> binarize(const std::vector<double>& probabilities, double threshold);

/// Tiles the scene with the training grid, runs inference per tile batch and
/// stitches probabilities back. Void pixels get probability 0 and are marked
/// invalid.
PredictionRaster predict_scene(models::Network& model, const raster::MultibandRaster& scene, double threshold = 0.5,
                               int tile_size = 32, raster::PadMode pad_mode = raster::PadMode::zero_pad,
                               int batch_size = 64);

/// Loads the network from a checkpoint (validating it against `expected`
/// when given) and predicts.
PredictionRaster predict_scene(const models::Checkpoint& ckpt, const raster::MultibandRaster& scene,
                               double threshold = 0.5, int tile_size = 32,
                               raster::PadMode pad_mode = raster::PadMode::zero_pad,
                               const models::ModelSpec* expected = nullptr);

enum class Outcome : std::uint8_t { excluded = 0, tn = 1, tp = 2, fp = 3, fn = 4 };

struct EvalReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t evaluated = 0;
  double precision = 0.0;  ///< 0 when undefined
  double recall = 0.0;     ///< 0 when undefined
  bool precision_defined = false;
  bool recall_defined = false;
  int width = 0;
  int height = 0;
  std::vector<Outcome> outcome_map;
  std::string combination;

  nlohmann::json to_json() const;  ///< counts and metrics, no map
};

/// Pixel-level confusion over pixels where `valid` is nonzero (all pixels
/// when `valid` is empty).
EvalReport confusion(std::span<const std::uint8_t> predicted, const raster::MaskRaster& truth,
                     std::span<const std::uint8_t> valid = {});
EvalReport confusion(const PredictionRaster& pred, const raster::MaskRaster& truth,
                     std::span<const std::uint8_t> valid = {});

struct OutcomeColor {
  Outcome outcome;
  std::uint8_t r, g, b;
  const char* name;
};
const std::vector<OutcomeColor>& outcome_palette();

/// Writes a 3-band uint8 GeoTIFF colored by outcome plus "<path>.legend.json".
void render_outcome_map(const EvalReport& report, const std::filesystem::path& path,
                        const std::optional<raster::GeoTransform>& georef = {});

// ---- grid ----------------------------------------------------------------

struct GridRow {
  training::Combination combination;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = false;
  bool recall_defined = false;
  bool failed = false;
  std::string error;
  bool best_precision = false;  ///< maximum within (framework, arch)
  bool best_recall = false;

  static GridRow from_report(const training::Combination& c, const EvalReport& r);
  static GridRow failure(const training::Combination& c, std::string error);
  std::string flags() const;
};

struct GridReport {
  std::vector<GridRow> rows;

  std::size_t failed_count() const;
  /// Columns: framework,arch,k,dataset,TP,FP,FN,precision,recall,flags.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Sorts rows by (framework, arch, k, dataset) and flags per-model maxima.
GridReport assemble_grid(std::vector<GridRow> rows);

/// Evaluates every combination on up to `workers` threads. An exception from
/// `evaluate` marks that row failed and the run continues.
GridReport run_grid(const std::vector<training::Combination>& combinations,
                    const std::function<EvalReport(const training::Combination&)>& evaluate, int workers = 1);

/// Per (arch, dataset): standard row next to the best and mean proposed rows.
nlohmann::json compare_frameworks(const GridReport& report);

}  // namespace relict::evaluation
