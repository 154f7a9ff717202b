#include "relict/raster/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "relict/core/error.hpp"
#include "relict/raster/raster.hpp"

namespace relict::raster {

using json = nlohmann::json;

Box bounds(const Polygon& p) {
  Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& pt : p.outer) {
    b.min_x = std::min(b.min_x, pt.x);
    b.min_y = std::min(b.min_y, pt.y);
    b.max_x = std::max(b.max_x, pt.x);
    b.max_y = std::max(b.max_y, pt.y);
  }
  return b;
}

namespace {

bool ring_crossings_odd(const Ring& ring, double x, double y) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = ring[i];
    const Point& b = ring[j];
    if ((a.y > y) != (b.y > y)) {
      const double xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

Ring parse_ring(const json& coords) {
  Ring ring;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2) throw Error("geojson: malformed coordinate");
    ring.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  if (ring.size() > 1 && ring.front().x == ring.back().x && ring.front().y == ring.back().y)
    ring.pop_back();
  if (ring.size() < 3) throw Error("geojson: ring with fewer than 3 vertices");
  return ring;
}

Polygon parse_polygon(const json& rings) {
  if (!rings.is_array() || rings.empty()) throw Error("geojson: polygon without rings");
  Polygon p;
  p.outer = parse_ring(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(parse_ring(rings[i]));
  return p;
}

void append_geometry(const json& geom, PolygonSet& out) {
  const std::string type = geom.at("type").get<std::string>();
  if (type == "Polygon") {
    out.push_back(parse_polygon(geom.at("coordinates")));
  } else if (type == "MultiPolygon") {
    for (const auto& poly : geom.at("coordinates")) out.push_back(parse_polygon(poly));
  } else {
    throw Error("geojson: unsupported geometry type " + type);
  }
}

json ring_json(const Ring& ring) {
  json arr = json::array();
  for (const auto& p : ring) arr.push_back({p.x, p.y});
  if (!ring.empty()) arr.push_back({ring.front().x, ring.front().y});
  return arr;
}

}  // namespace

bool contains(const Polygon& p, double x, double y) {
  if (p.outer.size() < 3) return false;
  bool inside = ring_crossings_odd(p.outer, x, y);
  for (const auto& hole : p.holes)
    if (hole.size() >= 3 && ring_crossings_odd(hole, x, y)) inside = !inside;
  return inside;
}

bool contains_any(const PolygonSet& set, double x, double y) {
  return std::any_of(set.begin(), set.end(), [&](const Polygon& p) { return contains(p, x, y); });
}

FeatureCollection load_geojson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open polygon file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("geojson parse error in " + path.string() + ": " + e.what());
  }
  FeatureCollection fc;
  if (doc.value("coordinate_space", std::string("geo")) == "pixel") fc.space = CoordinateSpace::pixel;
  const std::string type = doc.value("type", std::string());
  if (type == "FeatureCollection") {
    for (const auto& feature : doc.at("features")) {
      if (feature.contains("geometry") && !feature["geometry"].is_null())
        append_geometry(feature["geometry"], fc.polygons);
    }
  } else if (type == "Feature") {
    append_geometry(doc.at("geometry"), fc.polygons);
  } else {
    append_geometry(doc, fc.polygons);
  }
  return fc;
}

void save_geojson(const FeatureCollection& fc, const std::filesystem::path& path) {
  json doc{{"type", "FeatureCollection"}, {"features", json::array()}};
  if (fc.space == CoordinateSpace::pixel) doc["coordinate_space"] = "pixel";
  for (const auto& p : fc.polygons) {
    json rings = json::array({ring_json(p.outer)});
    for (const auto& h : p.holes) rings.push_back(ring_json(h));
    doc["features"].push_back({{"type", "Feature"},
                               {"properties", json::object()},
                               {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

PolygonSet to_pixel_space(const PolygonSet& polygons, const GeoTransform& g) {
  auto convert = [&](const Ring& r) {
    Ring out;
    out.reserve(r.size());
    for (const auto& p : r)
      out.push_back({(p.x - g.origin_x) / g.pixel_width, (g.origin_y - p.y) / g.pixel_height});
    return out;
  };
  PolygonSet result;
  for (const auto& p : polygons) {
    Polygon q{convert(p.outer), {}};
    for (const auto& h : p.holes) q.holes.push_back(convert(h));
    result.push_back(std::move(q));
  }
  return result;
}

}  // namespace relict::raster
