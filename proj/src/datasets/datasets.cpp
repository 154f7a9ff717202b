#include "relict/datasets/datasets.hpp"

#include <algorithm>

#include "relict/core/error.hpp"
#include "relict/core/rng.hpp"

namespace relict::datasets {

std::string to_string(DatasetKind k) { return k == DatasetKind::labeled ? "labeled" : "cluster"; }
std::string to_string(Area a) { return a == Area::train ? "train" : "test"; }

std::size_t DatasetManifest::count_sum() const {
  std::size_t sum = 0;
  for (const auto& [area, counts] : class_counts)
    for (const auto& [label, n] : counts) sum += n;
  return sum;
}

void DatasetManifest::validate() const {
  if (count_sum() != total)
    throw Error("manifest class counts sum to " + std::to_string(count_sum()) + " but total is " +
                std::to_string(total));
}

void recount(DatasetManifest& manifest, const std::vector<LabeledTile>& tiles) {
  manifest.class_counts.clear();
  manifest.class_counts["train"] = {{0, 0}, {1, 0}};
  manifest.class_counts["test"] = {{0, 0}, {1, 0}};
  for (const auto& t : tiles) manifest.class_counts[to_string(t.area)][t.label] += 1;
  manifest.total = tiles.size();
}

void recount(DatasetManifest& manifest, const std::vector<ClusterTile>& tiles) {
  manifest.class_counts.clear();
  auto& counts = manifest.class_counts["all"];
  if (manifest.k)
    for (int c = 0; c < *manifest.k; ++c) counts[c] = 0;
  for (const auto& t : tiles) counts[t.cluster_label] += 1;
  manifest.total = tiles.size();
}

LabeledDataset build_labeled_dataset(const raster::TileGrid& grid, const raster::MaskRaster& mask,
                                     const raster::AreaSplit& split) {
  if (mask.width != grid.source_width || mask.height != grid.source_height)
    throw Error("landslide mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                " does not match tile grid source " + std::to_string(grid.source_width) + "x" +
                std::to_string(grid.source_height));
  LabeledDataset ds;
  ds.manifest.kind = DatasetKind::labeled;
  ds.manifest.tile_size = grid.tile_size;
  ds.manifest.pad_mode = grid.pad_mode;
  ds.manifest.split_ratio = split.target_ratio;
  for (const auto& tile : grid.tiles) {
    if (tile.all_invalid()) {
      ds.manifest.dropped_void_tiles += 1;
      continue;
    }
    LabeledTile lt;
    lt.tile = tile;
    lt.target_mask = raster::mask_window(mask, tile.grid_row, tile.grid_col, grid.tile_size);
    lt.label = std::any_of(lt.target_mask.begin(), lt.target_mask.end(), [](std::uint8_t v) { return v != 0; }) ? 1 : 0;
    lt.area = split.area_of(tile.window);
    ds.tiles.push_back(std::move(lt));
  }
  recount(ds.manifest, ds.tiles);
  return ds;
}

ClusterDataset build_cluster_dataset(std::span<const raster::TileGrid> grids, const clustering::KMeansModel& model) {
  if (model.k < 1 || model.centroids.size() != static_cast<std::size_t>(model.k) * model.dims)
    throw Error("cluster dataset requires a fitted k-means model");
  ClusterDataset ds;
  ds.manifest.kind = DatasetKind::cluster;
  ds.manifest.k = model.k;
  ds.manifest.seeds["kmeans"] = model.seed;
  std::vector<double> px(model.dims);
  for (std::size_t s = 0; s < grids.size(); ++s) {
    const auto& grid = grids[s];
    if (grid.bands != model.dims) throw Error("scene band count does not match the k-means model");
    ds.manifest.tile_size = grid.tile_size;
    ds.manifest.pad_mode = grid.pad_mode;
    const int area = grid.tile_size * grid.tile_size;
    for (const auto& tile : grid.tiles) {
      if (tile.all_invalid()) {
        ds.manifest.dropped_void_tiles += 1;
        continue;
      }
      std::vector<int> labels(area, 0);
      for (int i = 0; i < area; ++i) {
        if (!tile.validity[i]) continue;
        for (int b = 0; b < model.dims; ++b) px[b] = tile.pixels[static_cast<std::size_t>(b) * area + i];
        labels[i] = clustering::assign_one(model, px);
      }
      ds.tiles.push_back({tile, clustering::predominant_label(labels, tile.validity), static_cast<int>(s)});
    }
  }
  recount(ds.manifest, ds.tiles);
  return ds;
}

std::vector<ClusterTile> balance_classes(const std::vector<ClusterTile>& tiles, int k, std::uint64_t seed,
                                         std::size_t drop_below) {
  if (k < 1) throw Error("balance_classes requires k >= 1");
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const int c = tiles[i].cluster_label;
    if (c < 0 || c >= k) throw Error("cluster label " + std::to_string(c) + " outside [0, k)");
    by_class[c].push_back(i);
  }
  std::size_t minimum = tiles.size();
  int kept_classes = 0;
  for (int c = 0; c < k; ++c) {
    if (drop_below > 0 && by_class[c].size() < drop_below) {
      by_class[c].clear();
      continue;
    }
    if (by_class[c].empty()) throw Error("cannot balance: cluster " + std::to_string(c) + " has no tiles");
    minimum = std::min(minimum, by_class[c].size());
    ++kept_classes;
  }
  if (drop_below > 0 && kept_classes < 2)
    throw Error("cannot balance: fewer than two clusters have at least " + std::to_string(drop_below) + " tiles");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (int c = 0; c < k; ++c) {
    const auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() == minimum) {
      keep.insert(keep.end(), members.begin(), members.end());
      continue;
    }
    for (std::size_t j : rng.sample_indices(members.size(), minimum)) keep.push_back(members[j]);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<ClusterTile> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(tiles[i]);
  return out;
}

namespace {

template <typename T>
void flip_plane(T* p, int s, Flip flip) {
  if (flip == Flip::horizontal || flip == Flip::both)
    for (int y = 0; y < s; ++y) std::reverse(p + static_cast<std::size_t>(y) * s, p + static_cast<std::size_t>(y + 1) * s);
  if (flip == Flip::vertical || flip == Flip::both)
    for (int y = 0; y < s / 2; ++y)
      std::swap_ranges(p + static_cast<std::size_t>(y) * s, p + static_cast<std::size_t>(y + 1) * s,
                       p + static_cast<std::size_t>(s - 1 - y) * s);
}

}  // namespace

void apply_flip(raster::Tile& tile, std::vector<std::uint8_t>* mask, Flip flip) {
  if (flip == Flip::identity) return;
  const int s = tile.tile_size;
  const std::size_t area = static_cast<std::size_t>(s) * s;
  for (int b = 0; b < tile.bands; ++b) flip_plane(tile.pixels.data() + b * area, s, flip);
  flip_plane(tile.validity.data(), s, flip);
  if (mask) flip_plane(mask->data(), s, flip);
}

std::vector<LabeledTile> augment_positives(const std::vector<LabeledTile>& tiles, int factor, std::uint64_t seed) {
  if (factor < 1) throw Error("augmentation factor must be >= 1");
  Rng rng(seed);
  std::vector<LabeledTile> out;
  for (const auto& t : tiles) {
    if (t.label != 1 || t.area != Area::train) {
      out.push_back(t);
      continue;
    }
    const auto phase = static_cast<int>(rng.below(4));
    for (int j = 0; j < factor; ++j) {
      LabeledTile copy = t;
      copy.variant = static_cast<Flip>((phase + j) % 4);
      apply_flip(copy.tile, &copy.target_mask, copy.variant);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace relict::datasets
