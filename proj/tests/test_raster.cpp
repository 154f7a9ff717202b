#include <doctest.h>

#include <cmath>
#include <fstream>

#include "relict/core/error.hpp"
#include "relict/raster/raster_io.hpp"
#include "relict/raster/split.hpp"
#include "relict/raster/tiling.hpp"
#include "support.hpp"

using namespace relict;
using namespace relict::raster;
using relict::testing::TempDir;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) { return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}}; }

// 8-connected flood fill count.
int count_components(const MaskRaster& m) {
  std::vector<int> seen(m.values.size(), 0);
  int count = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x) || seen[y * m.width + x]) continue;
      ++count;
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen[y * m.width + x] = 1;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            if (!m.at(ny, nx) || seen[ny * m.width + nx]) continue;
            seen[ny * m.width + nx] = 1;
            stack.push_back({nx, ny});
          }
      }
    }
  return count;
}

}  // namespace

TEST_CASE("GeoTIFF round trip preserves pixels, georeference, band names and voids") {
  TempDir dir("raster_io");
  Rng rng(1);
  for (auto type : {SampleType::uint8, SampleType::uint16, SampleType::float32, SampleType::float64}) {
    auto r = testing::random_raster(37, 21, 4, rng, 1.0, 250.0);
    r.band_names = {"blue", "green", "red", "nir"};
    r.georef = GeoTransform{500000.0, 7400000.0, 8.0, 8.0, "EPSG:31983"};
    r.nodata_value = 0.0;
    r.nodata[5] = 1;
    for (int b = 0; b < 4; ++b) r.pixels[b * r.plane_size() + 5] = 0.0;
    const auto path = dir / "scene.tif";
    save_raster(r, path, type);
    const auto back = load_raster(path, 4);
    CHECK(back.width == 37);
    CHECK(back.height == 21);
    CHECK(back.pixels == r.pixels);
    CHECK(back.band_names == r.band_names);
    REQUIRE(back.georef.has_value());
    CHECK(*back.georef == *r.georef);
    CHECK(back.nodata == r.nodata);
  }
}

TEST_CASE("ASCII grid round trip") {
  TempDir dir("asc");
  auto r = MultibandRaster::zeros(5, 3, 1);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = static_cast<double>(i) * 1.5;
  r.georef = GeoTransform{10.0, 20.0, 2.0, 2.0, ""};
  save_raster(r, dir / "grid.asc");
  const auto back = load_raster(dir / "grid.asc");
  CHECK(back.pixels == r.pixels);
  CHECK(back.georef->origin_x == 10.0);
  CHECK(back.georef->origin_y == 20.0);
}

TEST_CASE("raster I/O reports band mismatches and bad paths") {
  TempDir dir("io_errors");
  Rng rng(2);
  const auto r = testing::random_raster(8, 8, 3, rng);
  save_raster(r, dir / "three.tif");
  CHECK_THROWS_AS(load_raster(dir / "three.tif", 4), Error);
  CHECK_THROWS_AS(load_raster(dir / "missing.tif"), Error);
  CHECK_THROWS_AS(save_raster(r, dir / "no_such_dir" / "x.tif"), Error);
  CHECK_THROWS_AS(save_raster(r, dir / "x.png"), Error);
}

TEST_CASE("clip_regions voids pixel centers inside polygons") {
  Rng rng(3);
  const auto r = testing::random_raster(10, 10, 2, rng, 1.0, 100.0);
  const PolygonSet voids{rect(0, 0, 3, 10)};
  const auto c = clip_regions(r, voids);
  CHECK(c.void_count() == 30);
  CHECK(c.is_void(4, 2));
  CHECK_FALSE(c.is_void(4, 3));
  CHECK(c.at(1, 4, 2) == 0.0);
  CHECK(c.at(1, 4, 3) == r.at(1, 4, 3));

  SUBCASE("idempotent") {
    const auto twice = clip_regions(c, voids);
    CHECK(twice.pixels == c.pixels);
    CHECK(twice.nodata == c.nodata);
  }
  SUBCASE("full extent voids everything") { CHECK(clip_regions(r, {rect(-1, -1, 11, 11)}).void_count() == 100); }
  SUBCASE("regions outside the extent warn and change nothing") {
    const auto o = clip_regions(r, {rect(20, 20, 30, 30)});
    CHECK(o.pixels == r.pixels);
    REQUIRE(o.warnings.size() == 1);
    CHECK(o.warnings[0] == "void_regions_outside_extent");
  }
}

TEST_CASE("rasterize_mask marks pixels whose centers are inside, honoring holes") {
  Polygon p = rect(1, 1, 9, 9);
  p.holes.push_back({{4, 4}, {6, 4}, {6, 6}, {4, 6}});
  const auto m = rasterize_mask({p}, 10, 10);
  CHECK(m.count() == 64 - 4);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(4, 4) == 0);
  CHECK(rasterize_mask({}, 4, 4).count() == 0);
}

TEST_CASE("GeoJSON polygons convert from map to pixel space") {
  TempDir dir("geojson");
  const auto path = dir / "scars.geojson";
  std::ofstream(path) << R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{},
    "geometry":{"type":"Polygon","coordinates":[[[100,1000],[116,1000],[116,984],[100,984],[100,1000]]]}}]})";
  const auto fc = load_geojson(path);
  REQUIRE(fc.space == CoordinateSpace::geo);
  const GeoTransform g{100.0, 1000.0, 2.0, 2.0, ""};
  const auto m = rasterize_mask(to_pixel_space(fc.polygons, g), 10, 10);
  CHECK(m.count() == 64);
  CHECK(m.at(7, 7) == 1);
  CHECK(m.at(8, 8) == 0);

  save_geojson({{rect(0, 0, 2, 2)}, CoordinateSpace::pixel}, dir / "pixel.geojson");
  const auto back = load_geojson(dir / "pixel.geojson");
  CHECK(back.space == CoordinateSpace::pixel);
  CHECK(rasterize_mask(back.polygons, 4, 4).count() == 4);
}

TEST_CASE("tile grid dimensions follow ceil/floor per pad mode") {
  CHECK(grid_dims(100, 70, 32, PadMode::zero_pad).rows == 3);
  CHECK(grid_dims(100, 70, 32, PadMode::zero_pad).cols == 4);
  CHECK(grid_dims(100, 70, 32, PadMode::crop).rows == 2);
  CHECK(grid_dims(100, 70, 32, PadMode::crop).cols == 3);
  CHECK(grid_dims(64, 64, 32, PadMode::crop).count() == 4);
  CHECK(grid_dims(64, 64, 32, PadMode::zero_pad).count() == 4);
  // A 14,208 x 14,592 crop holds 444 x 456 tiles.
  CHECK(grid_dims(14208, 14592, 32, PadMode::crop).count() == 202464);
  // 14,210 wide: cropping drops the last two columns, padding adds a 445th tile column.
  CHECK(grid_dims(14210, 14592, 32, PadMode::crop).count() == 202464);
  CHECK(grid_dims(14210, 14592, 32, PadMode::zero_pad).count() == 202920);
  Rng rng(1);
  CHECK_THROWS_AS(make_tile_grid(testing::random_raster(20, 40, 1, rng), 32, PadMode::crop), Error);
}

TEST_CASE("tiles copy source pixels and mark pad and void pixels invalid") {
  Rng rng(4);
  auto r = testing::random_raster(40, 35, 2, rng, 1.0, 50.0);
  r.nodata[3 * 40 + 2] = 1;
  const auto g = make_tile_grid(r, 32, PadMode::zero_pad);
  REQUIRE(g.rows == 2);
  REQUIRE(g.cols == 2);
  const Tile& t = g.tile(1, 1);
  CHECK(t.padded);
  CHECK(t.window.x0 == 32);
  CHECK(t.window.w == 8);
  CHECK(t.window.h == 3);
  CHECK(t.valid_count() == 24);
  CHECK(t.at(1, 0, 0) == r.at(1, 32, 32));
  CHECK(t.at(0, 10, 10) == 0.0);
  CHECK_FALSE(g.tile(0, 0).valid(3, 2));
  CHECK_FALSE(g.tile(0, 0).padded);
}

TEST_CASE("stitch reproduces the source extent exactly") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 32 + static_cast<int>(rng.below(70)), h = 32 + static_cast<int>(rng.below(70));
    const auto r = testing::random_raster(w, h, 3, rng);
    const auto padded = stitch(make_tile_grid(r, 32, PadMode::zero_pad));
    CHECK(padded.pixels == r.pixels);
    const auto g = make_tile_grid(r, 32, PadMode::crop);
    const auto cropped = stitch(g);
    REQUIRE(cropped.width == g.covered_width());
    bool same = true;
    for (int b = 0; b < 3; ++b)
      for (int y = 0; y < cropped.height; ++y)
        for (int x = 0; x < cropped.width; ++x) same = same && cropped.at(b, y, x) == r.at(b, y, x);
    CHECK(same);
  }
}

TEST_CASE("mask_window zero-fills beyond the extent") {
  auto m = MaskRaster::zeros(40, 40);
  m.at(33, 39) = 1;
  const auto w = mask_window(m, 1, 1, 32);
  CHECK(w[1 * 32 + 7] == 1);
  CHECK(std::count(w.begin(), w.end(), 1) == 1);
}

TEST_CASE("connected components agree with a flood-fill count") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = testing::random_mask(30, 25, 0.3, rng);
    const auto c = connected_components(m);
    CHECK(c.count == count_components(m));
    for (std::size_t i = 0; i < m.values.size(); ++i) CHECK((c.labels[i] != 0) == (m.values[i] != 0));
  }
}

TEST_CASE("train/test split never bisects a landslide and sends straddling tiles to test") {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    auto m = MaskRaster::zeros(128, 96);
    const int blobs = 3 + static_cast<int>(rng.below(8));
    for (int b = 0; b < blobs; ++b) {
      const int x = static_cast<int>(rng.below(120)), y = static_cast<int>(rng.below(88));
      for (int dy = 0; dy < 1 + static_cast<int>(rng.below(6)); ++dy)
        for (int dx = 0; dx < 1 + static_cast<int>(rng.below(6)); ++dx) m.at(y + dy, x + dx) = 1;
    }
    const auto comps = connected_components(m);
    if (comps.count < 2) continue;
    const auto r = MultibandRaster::zeros(128, 96, 1);
    AreaSplit s;
    try {
      s = split_train_test(r, m, 0.7);
    } catch (const Error&) {
      continue;  // every cut bisects a component
    }
    int train = 0;
    for (const auto& box : comps.boxes) {
      const bool in_train = s.train_region.contains(box.x0, box.y0) && s.train_region.contains(box.x1 - 1, box.y1 - 1);
      const bool in_test = s.test_region.contains(box.x0, box.y0) && s.test_region.contains(box.x1 - 1, box.y1 - 1);
      CHECK(in_train != in_test);
      train += in_train;
    }
    CHECK(train == s.train_landslide_count);
    CHECK(s.achieved_ratio == doctest::Approx(static_cast<double>(train) / comps.count));
    // No admissible cut does better: brute-force every vertical and horizontal cut.
    double best = 1.0;
    for (int axis = 0; axis < 2; ++axis) {
      const int extent = axis == 0 ? 128 : 96;
      for (int cut = 1; cut < extent; ++cut) {
        int low = 0;
        bool ok = true;
        for (const auto& box : comps.boxes) {
          const int a = axis == 0 ? box.x0 : box.y0, b = axis == 0 ? box.x1 : box.y1;
          if (b <= cut) ++low;
          else if (a < cut) ok = false;
        }
        if (!ok) continue;
        const double lo = static_cast<double>(low) / comps.count;
        best = std::min({best, std::abs(lo - 0.7), std::abs(1 - lo - 0.7)});
      }
    }
    CHECK(std::abs(s.achieved_ratio - 0.7) == doctest::Approx(best));
  }
  SUBCASE("a window crossing the cut is test") {
    AreaSplit s;
    s.train_region = {0, 0, 50, 100};
    s.test_region = {50, 0, 100, 100};
    CHECK(s.area_of(PixelWindow{0, 0, 32, 32}) == Area::train);
    CHECK(s.area_of(PixelWindow{32, 0, 32, 32}) == Area::test);
  }
  SUBCASE("errors") {
    auto m = MaskRaster::zeros(10, 10);
    m.at(1, 1) = 1;
    const auto r = MultibandRaster::zeros(10, 10, 1);
    CHECK_THROWS_AS(split_train_test(r, m, 0.7), Error);
    m.at(8, 8) = 1;
    CHECK_THROWS_AS(split_train_test(r, m, 1.0), Error);
    CHECK_THROWS_AS(split_train_test(MultibandRaster::zeros(9, 10, 1), m, 0.5), Error);
  }
}
