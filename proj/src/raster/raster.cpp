#include "relict/raster/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relict/core/error.hpp"

namespace relict::raster {

MultibandRaster MultibandRaster::zeros(int width, int height, int bands) {
  MultibandRaster r;
  r.width = width;
  r.height = height;
  r.bands = bands;
  r.pixels.assign(static_cast<std::size_t>(bands) * width * height, 0.0);
  r.nodata.assign(static_cast<std::size_t>(width) * height, 0);
  for (int b = 0; b < bands; ++b) r.band_names.push_back("band" + std::to_string(b + 1));
  r.validate();
  return r;
}

std::size_t MultibandRaster::void_count() const {
  return static_cast<std::size_t>(std::count(nodata.begin(), nodata.end(), 1));
}

void MultibandRaster::validate() const {
  if (width < 1 || height < 1 || bands < 1)
    throw Error("raster dimensions must be positive (got " + std::to_string(width) + "x" +
                std::to_string(height) + "x" + std::to_string(bands) + ")");
  if (pixels.size() != static_cast<std::size_t>(bands) * width * height)
    throw Error("raster pixel buffer does not match bands x height x width");
  if (nodata.size() != plane_size()) throw Error("raster nodata mask does not match height x width");
  if (!band_names.empty() && band_names.size() != static_cast<std::size_t>(bands))
    throw Error("raster band name count does not match band count");
}

MaskRaster MaskRaster::zeros(int width, int height) {
  MaskRaster m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<std::size_t>(width) * height, 0);
  return m;
}

std::size_t MaskRaster::count() const {
  return static_cast<std::size_t>(std::accumulate(values.begin(), values.end(), std::size_t{0}));
}

void MaskRaster::validate() const {
  if (width < 1 || height < 1) throw Error("mask dimensions must be positive");
  if (values.size() != static_cast<std::size_t>(width) * height)
    throw Error("mask buffer does not match height x width");
  if (std::any_of(values.begin(), values.end(), [](std::uint8_t v) { return v > 1; }))
    throw Error("mask values must be 0 or 1");
}

namespace {

// Visits pixels whose centers fall inside `p`, restricted to its bounding box.
template <typename Fn>
void for_each_covered_pixel(const Polygon& p, int width, int height, Fn&& fn) {
  const Box b = bounds(p);
  const int x0 = std::max(0, static_cast<int>(std::floor(b.min_x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.min_y - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(b.max_x - 0.5)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(b.max_y - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (contains(p, x + 0.5, y + 0.5)) fn(y, x);
}

}  // namespace

MultibandRaster clip_regions(const MultibandRaster& raster, const PolygonSet& void_regions) {
  raster.validate();
  MultibandRaster out = raster;
  if (void_regions.empty()) return out;
  const Box extent{0.0, 0.0, static_cast<double>(raster.width), static_cast<double>(raster.height)};
  bool any_overlap = false;
  for (const auto& poly : void_regions) {
    if (!bounds(poly).intersects(extent)) continue;
    any_overlap = true;
    for_each_covered_pixel(poly, raster.width, raster.height, [&](int y, int x) {
      out.nodata[static_cast<std::size_t>(y) * raster.width + x] = 1;
      for (int b = 0; b < raster.bands; ++b) out.at(b, y, x) = 0.0;
    });
  }
  if (!any_overlap) out.warnings.push_back("void_regions_outside_extent");
  return out;
}

MaskRaster rasterize_mask(const PolygonSet& polygons, int width, int height) {
  MaskRaster mask = MaskRaster::zeros(width, height);
  for (const auto& poly : polygons)
    for_each_covered_pixel(poly, width, height, [&](int y, int x) { mask.at(y, x) = 1; });
  return mask;
}

MaskRaster rasterize_mask(const PolygonSet& polygons, const MultibandRaster& templ) {
  return rasterize_mask(polygons, templ.width, templ.height);
}

MaskRaster void_mask(const MultibandRaster& raster) {
  MaskRaster m = MaskRaster::zeros(raster.width, raster.height);
  m.values = raster.nodata;
  return m;
}

MultibandRaster mask_to_raster(const MaskRaster& mask, const std::optional<GeoTransform>& georef) {
  MultibandRaster r = MultibandRaster::zeros(mask.width, mask.height, 1);
  r.band_names = {"mask"};
  for (std::size_t i = 0; i < mask.values.size(); ++i) r.pixels[i] = mask.values[i];
  r.georef = georef;
  return r;
}

MaskRaster raster_to_mask(const MultibandRaster& raster) {
  MaskRaster m = MaskRaster::zeros(raster.width, raster.height);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = (!raster.nodata[i] && raster.pixels[i] != 0.0) ? 1 : 0;
  return m;
}

}  // namespace relict::raster
