#pragma once

#include <vector>

#include "relict/raster/raster.hpp"
#include "relict/raster/tiling.hpp"

namespace relict::raster {

struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  ///< exclusive
  int y1 = 0;  ///< exclusive
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool contains(const PixelWindow& w) const {
    return w.x0 >= x0 && w.y0 >= y0 && w.x0 + w.w <= x1 && w.y0 + w.h <= y1;
  }
};

/// 8-connected components of a binary mask. `labels` holds 0 for background
/// and 1..count for components.
struct Components {
  int count = 0;
  std::vector<int> labels;
  std::vector<PixelRect> boxes;  ///< index i -> component i + 1
};

Components connected_components(const MaskRaster& mask);

enum class Area { train, test };
enum class CutAxis { vertical, horizontal };

/// A single straight cut through the scene. Pixels with coordinate < cut along
/// the cut axis lie on the low side.
struct AreaSplit {
  CutAxis axis = CutAxis::vertical;
  int cut = 0;
  bool train_on_low_side = true;
  PixelRect train_region;
  PixelRect test_region;
  int train_landslide_count = 0;
  int test_landslide_count = 0;
  double target_ratio = 0.0;
  double achieved_ratio = 0.0;

  /// Windows entirely inside the train region are train; everything else,
  /// including windows straddling the cut, is test.
  Area area_of(const PixelWindow& w) const {
    return train_region.contains(w) ? Area::train : Area::test;
  }
  MaskRaster region_mask(Area area, int width, int height) const;
};

/// Sweeps every vertical and horizontal cut that bisects no landslide
/// component and keeps the one whose train-side component fraction is
/// closest to `target_ratio`. Ties prefer vertical cuts, train on the low
/// side, then the smallest cut coordinate.
AreaSplit split_train_test(const MultibandRaster& raster, const MaskRaster& mask, double target_ratio);

}  // namespace relict::raster
