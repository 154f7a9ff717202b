#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relict::raster {

struct GeoTransform;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Ring = std::vector<Point>;

/// Outer ring followed by optional holes. Rings need not be closed.
struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

using PolygonSet = std::vector<Polygon>;

/// Axis-aligned box in continuous coordinates.
struct Box {
  double min_x, min_y, max_x, max_y;
  bool intersects(const Box& o) const {
    return min_x < o.max_x && o.min_x < max_x && min_y < o.max_y && o.min_y < max_y;
  }
};

Box bounds(const Polygon& p);

/// Even-odd point-in-polygon test over the outer ring and holes.
bool contains(const Polygon& p, double x, double y);
bool contains_any(const PolygonSet& set, double x, double y);

enum class CoordinateSpace { pixel, geo };

struct FeatureCollection {
  PolygonSet polygons;
  CoordinateSpace space = CoordinateSpace::geo;
};

/// Reads Polygon/MultiPolygon features from a GeoJSON FeatureCollection.
/// A top-level `"coordinate_space": "pixel"` member marks pixel coordinates;
/// otherwise coordinates are map units of the paired raster.
FeatureCollection load_geojson(const std::filesystem::path& path);
void save_geojson(const FeatureCollection& fc, const std::filesystem::path& path);

/// Converts map coordinates to continuous pixel coordinates (x right, y down).
PolygonSet to_pixel_space(const PolygonSet& polygons, const GeoTransform& georef);

}  // namespace relict::raster
