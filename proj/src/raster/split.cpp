#include "relict/raster/split.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "relict/core/error.hpp"

namespace relict::raster {

Components connected_components(const MaskRaster& mask) {
  Components comp;
  comp.labels.assign(mask.values.size(), 0);
  std::vector<std::size_t> stack;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.values[idx] || comp.labels[idx]) continue;
      const int id = ++comp.count;
      PixelRect box{x, y, x + 1, y + 1};
      comp.labels[idx] = id;
      stack.push_back(idx);
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        const int cy = static_cast<int>(cur / mask.width);
        const int cx = static_cast<int>(cur % mask.width);
        box.x0 = std::min(box.x0, cx);
        box.y0 = std::min(box.y0, cy);
        box.x1 = std::max(box.x1, cx + 1);
        box.y1 = std::max(box.y1, cy + 1);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * mask.width + nx;
            if (mask.values[n] && !comp.labels[n]) {
              comp.labels[n] = id;
              stack.push_back(n);
            }
          }
      }
      comp.boxes.push_back(box);
    }
  return comp;
}

MaskRaster AreaSplit::region_mask(Area area, int width, int height) const {
  const PixelRect& r = area == Area::train ? train_region : test_region;
  MaskRaster m = MaskRaster::zeros(width, height);
  for (int y = std::max(0, r.y0); y < std::min(height, r.y1); ++y)
    for (int x = std::max(0, r.x0); x < std::min(width, r.x1); ++x) m.at(y, x) = 1;
  return m;
}

namespace {

struct Candidate {
  CutAxis axis;
  int cut;
  bool low;
  int train;
  double error;
};

// For cuts at c in [1, extent - 1] along one axis: a cut is valid when no
// component interval [lo, hi) has lo < c < hi. Returns per-cut low-side counts
// (or nullopt when invalid).
std::vector<std::optional<int>> sweep_axis(const std::vector<std::pair<int, int>>& intervals, int extent) {
  std::vector<int> ends_before(extent + 1, 0);  // components with hi <= c
  std::vector<int> crossing(extent + 1, 0);     // diff array over open (lo, hi)
  for (auto [lo, hi] : intervals) {
    ends_before[hi] += 1;
    if (hi - lo >= 2) {
      crossing[lo + 1] += 1;
      crossing[hi] -= 1;
    }
  }
  std::vector<std::optional<int>> out(extent + 1);
  int low = 0, cross = 0;
  for (int c = 0; c <= extent; ++c) {
    low += ends_before[c];
    cross += crossing[c];
    if (c >= 1 && c <= extent - 1 && cross == 0) out[c] = low;
  }
  return out;
}

}  // namespace

AreaSplit split_train_test(const MultibandRaster& raster, const MaskRaster& mask, double target_ratio) {
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw Error("split ratio must lie in (0, 1)");
  if (mask.width != raster.width || mask.height != raster.height)
    throw Error("landslide mask dimensions do not match the raster");
  const Components comp = connected_components(mask);
  if (comp.count < 2)
    throw Error("cannot split: need at least 2 landslide components, found " + std::to_string(comp.count));
  const int total = comp.count;

  std::vector<std::pair<int, int>> xs, ys;
  for (const auto& b : comp.boxes) {
    xs.emplace_back(b.x0, b.x1);
    ys.emplace_back(b.y0, b.y1);
  }

  std::optional<Candidate> best;
  auto consider = [&](CutAxis axis, int cut, bool low, int train) {
    if (train < 1 || train > total - 1) return;
    const double err = std::abs(static_cast<double>(train) / total - target_ratio);
    // strict improvement keeps the earliest candidate in sweep order on ties
    if (!best || err < best->error - 1e-15) best = Candidate{axis, cut, low, train, err};
  };
  for (CutAxis axis : {CutAxis::vertical, CutAxis::horizontal}) {
    const int extent = axis == CutAxis::vertical ? raster.width : raster.height;
    const auto counts = sweep_axis(axis == CutAxis::vertical ? xs : ys, extent);
    for (bool low : {true, false})
      for (int c = 1; c < extent; ++c)
        if (counts[c]) consider(axis, c, low, low ? *counts[c] : total - *counts[c]);
  }
  if (!best) throw Error("cannot split: every straight cut bisects a landslide component");

  AreaSplit s;
  s.axis = best->axis;
  s.cut = best->cut;
  s.train_on_low_side = best->low;
  s.target_ratio = target_ratio;
  s.train_landslide_count = best->train;
  s.test_landslide_count = total - best->train;
  s.achieved_ratio = static_cast<double>(best->train) / total;
  const PixelRect low_rect = s.axis == CutAxis::vertical ? PixelRect{0, 0, s.cut, raster.height}
                                                         : PixelRect{0, 0, raster.width, s.cut};
  const PixelRect high_rect = s.axis == CutAxis::vertical
                                  ? PixelRect{s.cut, 0, raster.width, raster.height}
                                  : PixelRect{0, s.cut, raster.width, raster.height};
  s.train_region = s.train_on_low_side ? low_rect : high_rect;
  s.test_region = s.train_on_low_side ? high_rect : low_rect;
  return s;
}

}  // namespace relict::raster
