#include <doctest.h>

#include <cmath>

#include "relict/core/error.hpp"
#include "relict/raster/split.hpp"
#include "relict/synthetic/synthetic.hpp"

using namespace relict;
using namespace relict::synthetic;

namespace {

raster::MaskRaster component(const raster::Components& cc, int id, int width, int height) {
  auto m = raster::MaskRaster::zeros(width, height);
  for (std::size_t i = 0; i < cc.labels.size(); ++i) m.values[i] = cc.labels[i] == id;
  return m;
}

// Chebyshev distance between the nearest pixels of two masks.
int gap(const raster::MaskRaster& a, const raster::MaskRaster& b) {
  int best = 1 << 30;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!a.at(y, x)) continue;
      for (int v = 0; v < b.height; ++v)
        for (int u = 0; u < b.width; ++u)
          if (b.at(v, u)) best = std::min(best, std::max(std::abs(u - x), std::abs(v - y)));
    }
  return best;
}

double mean_band(const Scene& s, const raster::MaskRaster& where, int band) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < s.raster.height; ++y)
    for (int x = 0; x < s.raster.width; ++x)
      if (where.at(y, x)) {
        sum += s.raster.at(band, y, x);
        ++n;
      }
  return sum / static_cast<double>(n);
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.width = 192;
  s.height = 160;
  s.scar_count = 5;
  s.confounder_count = 3;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("elongation of axis-aligned ellipses equals the axis ratio") {
  for (double ratio : {1.0, 2.0, 3.5}) {
    auto m = raster::MaskRaster::zeros(300, 120);
    const double b = 12.0, a = b * ratio;
    for (int y = 0; y < 120; ++y)
      for (int x = 0; x < 300; ++x) {
        const double dx = (x + 0.5 - 150) / a, dy = (y + 0.5 - 60) / b;
        m.at(y, x) = dx * dx + dy * dy <= 1.0;
      }
    CHECK(elongation(m) == doctest::Approx(ratio).epsilon(0.03));
  }
}

TEST_CASE("generated scenes honour the requested layout") {
  const SceneSpec spec = small_spec(7);
  const auto scene = generate_scene(spec);
  CHECK(scene.raster.width == spec.width);
  CHECK(scene.raster.bands == 4);
  CHECK(scene.raster.georef.has_value());
  CHECK(scene.raster.void_count() == 0);
  for (double v : scene.raster.pixels) {
    CHECK(v == std::floor(v));
    CHECK((v >= 0.0 && v <= 1023.0));
  }
  const auto scars = raster::connected_components(scene.mask);
  const auto conf = raster::connected_components(scene.confounder_mask);
  CHECK(scars.count == spec.scar_count);
  CHECK(conf.count == spec.confounder_count);

  std::vector<raster::MaskRaster> objects;
  for (int i = 1; i <= scars.count; ++i) {
    objects.push_back(component(scars, i, spec.width, spec.height));
    CHECK(elongation(objects.back()) >= spec.min_elongation);
  }
  for (int i = 1; i <= conf.count; ++i) objects.push_back(component(conf, i, spec.width, spec.height));
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = i + 1; j < objects.size(); ++j) CHECK(gap(objects[i], objects[j]) > spec.margin);

  auto forest = raster::MaskRaster::zeros(spec.width, spec.height);
  for (std::size_t i = 0; i < forest.values.size(); ++i)
    forest.values[i] = !scene.mask.values[i] && !scene.confounder_mask.values[i];
  // fern is brighter in the visible bands and NIR; confounders match fern in
  // the visible bands but not in NIR
  for (int b = 0; b < 4; ++b) CHECK(mean_band(scene, scene.mask, b) > mean_band(scene, forest, b) + 5.0);
  CHECK(std::abs(mean_band(scene, scene.confounder_mask, 1) - mean_band(scene, scene.mask, 1)) < 10.0);
  CHECK(mean_band(scene, scene.mask, 3) > mean_band(scene, scene.confounder_mask, 3) + 80.0);
}

TEST_CASE("generation is a pure function of the scene spec") {
  const auto a = generate_scene(small_spec(3));
  const auto b = generate_scene(small_spec(3));
  const auto c = generate_scene(small_spec(4));
  CHECK(a.raster.pixels == b.raster.pixels);
  CHECK(a.mask.values == b.mask.values);
  CHECK(a.confounder_mask.values == b.confounder_mask.values);
  CHECK(a.mask.values != c.mask.values);
}

TEST_CASE("scene spec validation and json") {
  SceneSpec s = small_spec(9);
  s.fern.mean[3] = 400;
  CHECK(SceneSpec::from_json(s.to_json()) == s);
  CHECK(SceneSpec::from_json(nlohmann::json::object()) == SceneSpec{});
  auto bad = s;
  bad.min_elongation = 5.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = s;
  bad.width = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  SceneSpec crowded = small_spec(1);
  crowded.width = crowded.height = 48;
  crowded.scar_count = 40;
  crowded.max_attempts = 50;
  CHECK_THROWS_WITH_AS(generate_scene(crowded), doctest::Contains("too crowded"), Error);
}
