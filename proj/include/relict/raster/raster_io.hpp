#pragma once

#include <filesystem>
#include <optional>

#include "relict/raster/raster.hpp"

namespace relict::raster {

/// On-disk sample encoding. `automatic` picks uint8/uint16 for integer grids
/// that fit and float32 otherwise.
enum class SampleType { automatic, uint8, uint16, float32, float64 };

/// Loads a GeoTIFF (`.tif`/`.tiff`, strip or tile organized, any planar
/// configuration) or an ESRI ASCII grid (`.asc`, single band). A pixel is void
/// when every band equals the container's nodata value.
///
/// `expected_bands`, when given, must match the file's band count.
MultibandRaster load_raster(const std::filesystem::path& path,
                            std::optional<int> expected_bands = std::nullopt);

/// Writes band-separate GeoTIFF or ESRI ASCII grid, chosen by extension. Void
/// pixels are written as the raster's nodata value (0 when unset).
void save_raster(const MultibandRaster& raster, const std::filesystem::path& path,
                 SampleType sample_type = SampleType::automatic);

}  // namespace relict::raster
