#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relict/raster/geometry.hpp"

namespace relict::raster {

/// North-up affine georeference: pixel (col, row) corner maps to
/// (origin_x + col * pixel_width, origin_y - row * pixel_height).
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_width = 1.0;
  double pixel_height = 1.0;
  std::string crs;  ///< "EPSG:<code>" or empty

  bool operator==(const GeoTransform&) const = default;
};

/// Band-major pixel grid with a per-pixel void mask.
struct MultibandRaster {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<double> pixels;      ///< bands x height x width
  std::vector<std::uint8_t> nodata;  ///< height x width, 1 = void
  std::vector<std::string> band_names;
  std::optional<GeoTransform> georef;
  std::optional<double> nodata_value;  ///< container sentinel, if any
  std::vector<std::string> warnings;

  static MultibandRaster zeros(int width, int height, int bands);

  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(width) * height; }
  double& at(int band, int y, int x) {
    return pixels[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  double at(int band, int y, int x) const {
    return pixels[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  std::span<const double> band(int b) const {
    return {pixels.data() + static_cast<std::size_t>(b) * plane_size(), plane_size()};
  }
  bool is_void(int y, int x) const { return nodata[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t void_count() const;

  /// Throws relict::Error if the shape invariants do not hold.
  void validate() const;
};

/// Binary {0,1} grid.
struct MaskRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  static MaskRaster zeros(int width, int height);
  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  void validate() const;
};

/// Sets every pixel whose center lies in `void_regions` to 0 and marks it void.
/// Regions entirely outside the raster leave it unchanged and append the
/// warning "void_regions_outside_extent".
MultibandRaster clip_regions(const MultibandRaster& raster, const PolygonSet& void_regions);

/// Pixel = 1 iff its center lies inside any polygon (pixel coordinates).
MaskRaster rasterize_mask(const PolygonSet& polygons, const MultibandRaster& templ);
MaskRaster rasterize_mask(const PolygonSet& polygons, int width, int height);

/// Mask of the raster's void pixels.
MaskRaster void_mask(const MultibandRaster& raster);

/// Single-band raster holding a 0/1 mask (for saving through the raster I/O).
MultibandRaster mask_to_raster(const MaskRaster& mask, const std::optional<GeoTransform>& georef = {});
/// Nonzero band-0 values become 1; void pixels become 0.
MaskRaster raster_to_mask(const MultibandRaster& raster);

}  // namespace relict::raster
