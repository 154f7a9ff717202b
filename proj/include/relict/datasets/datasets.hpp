#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relict/clustering/kmeans.hpp"
#include "relict/raster/split.hpp"
#include "relict/raster/tiling.hpp"

namespace relict::datasets {

using raster::Area;

/// Flip applied to a tile during augmentation.
enum class Flip : std::uint8_t { identity = 0, horizontal = 1, vertical = 2, both = 3 };

struct LabeledTile {
  raster::Tile tile;
  int label = 0;                          ///< 1 iff target_mask has a positive pixel
  std::vector<std::uint8_t> target_mask;  ///< tile_size x tile_size
  Area area = Area::train;
  Flip variant = Flip::identity;
  int scene = 0;
};

struct ClusterTile {
  raster::Tile tile;
  int cluster_label = 0;
  int scene = 0;
};

enum class DatasetKind { labeled, cluster };

std::string to_string(DatasetKind k);
std::string to_string(Area a);

struct DatasetManifest {
  DatasetKind kind = DatasetKind::labeled;
  /// labeled: keys "train"/"test"; cluster: single key "all". Inner map is
  /// class label -> tile count.
  std::map<std::string, std::map<int, std::size_t>> class_counts;
  std::size_t total = 0;
  std::vector<std::string> source_scenes;
  std::optional<int> k;
  int augmentation_factor = 0;
  std::optional<double> split_ratio;
  std::map<std::string, std::uint64_t> seeds;
  raster::PadMode pad_mode = raster::PadMode::zero_pad;
  int tile_size = 32;
  std::size_t dropped_void_tiles = 0;
  std::string config_hash;

  std::size_t count_sum() const;
  /// Throws if the per-class counts do not add up to `total`.
  void validate() const;
};

struct LabeledDataset {
  std::vector<LabeledTile> tiles;
  DatasetManifest manifest;
};

struct ClusterDataset {
  std::vector<ClusterTile> tiles;
  DatasetManifest manifest;
};

/// Labels every tile with at least one valid pixel: 1 iff the landslide mask
/// window has a positive pixel. Tiles entirely inside the train region are
/// train; all others (including those straddling the cut) are test.
LabeledDataset build_labeled_dataset(const raster::TileGrid& grid, const raster::MaskRaster& mask,
                                     const raster::AreaSplit& split);

/// Assigns each valid tile the predominant k-means cluster of its valid pixels.
ClusterDataset build_cluster_dataset(std::span<const raster::TileGrid> grids,
                                     const clustering::KMeansModel& model);

/// Seeded uniform undersampling of every class in [0, k) down to the smallest
/// class count. Relative order of the kept tiles is preserved. An empty class
/// is an error unless `drop_below` > 0, in which case classes with fewer
/// tiles than that are removed before balancing.
std::vector<ClusterTile> balance_classes(const std::vector<ClusterTile>& tiles, int k, std::uint64_t seed,
                                         std::size_t drop_below = 0);

/// Applies a flip to pixels, validity and (when present) the mask.
void apply_flip(raster::Tile& tile, std::vector<std::uint8_t>* mask, Flip flip);

/// Replaces each positive train tile by `factor` copies cycling through the
/// four flips from a seeded per-tile phase. Negatives and test tiles pass
/// through unchanged.
std::vector<LabeledTile> augment_positives(const std::vector<LabeledTile>& tiles, int factor, std::uint64_t seed);

/// Recomputes a labeled manifest's class counts from tiles.
void recount(DatasetManifest& manifest, const std::vector<LabeledTile>& tiles);
void recount(DatasetManifest& manifest, const std::vector<ClusterTile>& tiles);

}  // namespace relict::datasets
