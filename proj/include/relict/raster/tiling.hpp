#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relict/raster/raster.hpp"

namespace relict::raster {

enum class PadMode { zero_pad, crop };

std::string to_string(PadMode m);
PadMode pad_mode_from_string(const std::string& s);

struct GridDims {
  int rows = 0;
  int cols = 0;
  std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
};

/// zero_pad: ceil(extent / tile_size); crop: floor(extent / tile_size).
GridDims grid_dims(int width, int height, int tile_size, PadMode mode);

/// Part of a tile that overlaps the source raster, in source pixel coordinates.
struct PixelWindow {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

/// A tile_size x tile_size window of a raster. Pixels outside the source
/// extent are 0 and invalid; void source pixels are invalid too.
struct Tile {
  int grid_row = 0;
  int grid_col = 0;
  PixelWindow window;
  bool padded = false;
  int tile_size = 0;
  int bands = 0;
  std::vector<double> pixels;          ///< bands x tile_size x tile_size
  std::vector<std::uint8_t> validity;  ///< tile_size x tile_size, 1 = valid

  double& at(int b, int y, int x) {
    return pixels[(static_cast<std::size_t>(b) * tile_size + y) * tile_size + x];
  }
  double at(int b, int y, int x) const {
    return pixels[(static_cast<std::size_t>(b) * tile_size + y) * tile_size + x];
  }
  bool valid(int y, int x) const { return validity[static_cast<std::size_t>(y) * tile_size + x] != 0; }
  std::size_t valid_count() const;
  bool all_invalid() const { return valid_count() == 0; }
};

struct TileGrid {
  int tile_size = 32;
  int rows = 0;
  int cols = 0;
  PadMode pad_mode = PadMode::zero_pad;
  int source_width = 0;
  int source_height = 0;
  int bands = 0;
  std::vector<Tile> tiles;  ///< row-major

  const Tile& tile(int row, int col) const { return tiles[static_cast<std::size_t>(row) * cols + col]; }
  /// Extent covered by the grid once pad is discarded.
  int covered_width() const;
  int covered_height() const;
};

/// Cuts `raster` into disjoint tiles covering the padded (or cropped) extent.
TileGrid make_tile_grid(const MultibandRaster& raster, int tile_size = 32,
                        PadMode mode = PadMode::zero_pad);

/// Extracts the tile_size x tile_size window of `mask` at a grid position,
/// zero beyond the mask extent.
std::vector<std::uint8_t> mask_window(const MaskRaster& mask, int grid_row, int grid_col, int tile_size);

/// Reassembles the covered extent from the tiles, discarding pad.
MultibandRaster stitch(const TileGrid& grid);

}  // namespace relict::raster
