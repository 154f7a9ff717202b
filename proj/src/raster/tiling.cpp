#include "relict/raster/tiling.hpp"

#include <algorithm>
#include <numeric>

#include "relict/core/error.hpp"

namespace relict::raster {

std::string to_string(PadMode m) { return m == PadMode::zero_pad ? "zero_pad" : "crop"; }

PadMode pad_mode_from_string(const std::string& s) {
  if (s == "zero_pad") return PadMode::zero_pad;
  if (s == "crop") return PadMode::crop;
  throw ConfigError("unknown pad mode '" + s + "' (expected zero_pad or crop)");
}

GridDims grid_dims(int width, int height, int tile_size, PadMode mode) {
  if (tile_size < 1) throw Error("tile_size must be >= 1");
  if (width < 1 || height < 1) throw Error("raster extent must be positive");
  if (mode == PadMode::zero_pad)
    return {(height + tile_size - 1) / tile_size, (width + tile_size - 1) / tile_size};
  return {height / tile_size, width / tile_size};
}

std::size_t Tile::valid_count() const {
  return static_cast<std::size_t>(std::accumulate(validity.begin(), validity.end(), std::size_t{0}));
}

int TileGrid::covered_width() const {
  return pad_mode == PadMode::zero_pad ? source_width : cols * tile_size;
}
int TileGrid::covered_height() const {
  return pad_mode == PadMode::zero_pad ? source_height : rows * tile_size;
}

TileGrid make_tile_grid(const MultibandRaster& raster, int tile_size, PadMode mode) {
  raster.validate();
  const GridDims dims = grid_dims(raster.width, raster.height, tile_size, mode);
  if (dims.count() == 0)
    throw Error("tile_size " + std::to_string(tile_size) + " exceeds raster extent under crop mode");
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.rows = dims.rows;
  grid.cols = dims.cols;
  grid.pad_mode = mode;
  grid.source_width = raster.width;
  grid.source_height = raster.height;
  grid.bands = raster.bands;
  grid.tiles.reserve(dims.count());
  const std::size_t area = static_cast<std::size_t>(tile_size) * tile_size;
  for (int r = 0; r < dims.rows; ++r)
    for (int c = 0; c < dims.cols; ++c) {
      Tile t;
      t.grid_row = r;
      t.grid_col = c;
      t.tile_size = tile_size;
      t.bands = raster.bands;
      const int x0 = c * tile_size;
      const int y0 = r * tile_size;
      t.window = {x0, y0, std::min(tile_size, raster.width - x0), std::min(tile_size, raster.height - y0)};
      t.padded = t.window.w < tile_size || t.window.h < tile_size;
      t.pixels.assign(area * raster.bands, 0.0);
      t.validity.assign(area, 0);
      for (int y = 0; y < t.window.h; ++y)
        for (int x = 0; x < t.window.w; ++x) {
          const bool valid = !raster.is_void(y0 + y, x0 + x);
          t.validity[static_cast<std::size_t>(y) * tile_size + x] = valid ? 1 : 0;
          for (int b = 0; b < raster.bands; ++b) t.at(b, y, x) = raster.at(b, y0 + y, x0 + x);
        }
      grid.tiles.push_back(std::move(t));
    }
  return grid;
}

std::vector<std::uint8_t> mask_window(const MaskRaster& mask, int grid_row, int grid_col, int tile_size) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(tile_size) * tile_size, 0);
  const int x0 = grid_col * tile_size;
  const int y0 = grid_row * tile_size;
  for (int y = 0; y < tile_size && y0 + y < mask.height; ++y)
    for (int x = 0; x < tile_size && x0 + x < mask.width; ++x)
      out[static_cast<std::size_t>(y) * tile_size + x] = mask.at(y0 + y, x0 + x);
  return out;
}

MultibandRaster stitch(const TileGrid& grid) {
  MultibandRaster out = MultibandRaster::zeros(grid.covered_width(), grid.covered_height(), grid.bands);
  for (const Tile& t : grid.tiles)
    for (int y = 0; y < t.window.h; ++y)
      for (int x = 0; x < t.window.w; ++x) {
        const int sx = t.window.x0 + x;
        const int sy = t.window.y0 + y;
        if (sx >= out.width || sy >= out.height) continue;
        out.nodata[static_cast<std::size_t>(sy) * out.width + sx] = t.valid(y, x) ? 0 : 1;
        for (int b = 0; b < grid.bands; ++b) out.at(b, sy, sx) = t.at(b, y, x);
      }
  return out;
}

}  // namespace relict::raster
