#include "relict/synthetic/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "relict/core/error.hpp"
#include "relict/core/rng.hpp"
#include "relict/raster/split.hpp"

namespace relict::synthetic {

using json = nlohmann::json;

namespace {

json signature_json(const Signature& s) { return {{"mean", s.mean}, {"sigma", s.sigma}}; }

Signature signature_from(const json& j, Signature s) {
  if (j.contains("mean")) s.mean = j["mean"].get<std::array<double, 4>>();
  if (j.contains("sigma")) s.sigma = j["sigma"].get<std::array<double, 4>>();
  return s;
}

// Object footprint: pixels in a local box with the object's own 0/1 mask.
struct Blob {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<std::uint8_t> px;
  raster::MaskRaster as_mask() const { return {w, h, px}; }
};

// Rotated super-ellipse |u/a|^n + |v/b|^n <= r(theta)^n, where r wobbles
// with a few random harmonics.
Blob draw_blob(double a, double b, double angle, double exponent, double noise, Rng& rng) {
  std::array<double, 3> amp{}, phase{};
  for (int i = 0; i < 3; ++i) {
    amp[i] = noise * rng.uniform(0.3, 1.0) / (i + 1);
    phase[i] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  const double reach = a * (1.0 + noise) + 1.0;
  const int half = static_cast<int>(std::ceil(reach));
  Blob blob;
  blob.w = blob.h = 2 * half + 1;
  blob.px.assign(static_cast<std::size_t>(blob.w) * blob.h, 0);
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < blob.h; ++y)
    for (int x = 0; x < blob.w; ++x) {
      const double dx = x - half, dy = y - half;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      const double theta = std::atan2(v, u);
      double r = 1.0;
      for (int i = 0; i < 3; ++i) r += amp[i] * std::sin((i + 2) * theta + phase[i]);
      const double f = std::pow(std::abs(u / a), exponent) + std::pow(std::abs(v / b), exponent);
      if (f <= std::pow(std::max(r, 0.2), exponent)) blob.px[static_cast<std::size_t>(y) * blob.w + x] = 1;
    }
  return blob;
}

bool fits(const Blob& blob, int ox, int oy, const std::vector<std::uint8_t>& occupied, int width, int height,
          int margin) {
  for (int y = 0; y < blob.h; ++y)
    for (int x = 0; x < blob.w; ++x) {
      if (!blob.px[static_cast<std::size_t>(y) * blob.w + x]) continue;
      const int gx = ox + x, gy = oy + y;
      if (gx < 0 || gy < 0 || gx >= width || gy >= height) return false;
      for (int yy = std::max(0, gy - margin); yy <= std::min(height - 1, gy + margin); ++yy)
        for (int xx = std::max(0, gx - margin); xx <= std::min(width - 1, gx + margin); ++xx)
          if (occupied[static_cast<std::size_t>(yy) * width + xx]) return false;
    }
  return true;
}

void stamp(const Blob& blob, int ox, int oy, std::vector<std::uint8_t>& occupied, raster::MaskRaster& mask) {
  for (int y = 0; y < blob.h; ++y)
    for (int x = 0; x < blob.w; ++x)
      if (blob.px[static_cast<std::size_t>(y) * blob.w + x]) {
        const std::size_t i = static_cast<std::size_t>(oy + y) * mask.width + ox + x;
        occupied[i] = 1;
        mask.values[i] = 1;
      }
}

struct Shape {
  double minor_min, minor_max, elong_min, elong_max;
  bool check_elongation;
};

void place_objects(int count, const Shape& shape, const SceneSpec& spec, Rng& rng,
                   std::vector<std::uint8_t>& occupied, raster::MaskRaster& mask, const char* what) {
  for (int n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      const double b = rng.uniform(shape.minor_min, shape.minor_max);
      const double e = rng.uniform(shape.elong_min, shape.elong_max);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const Blob blob = draw_blob(b * e, b, angle, spec.superellipse_exponent, spec.boundary_noise, rng);
      const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, spec.width - blob.w + 1))));
      const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, spec.height - blob.h + 1))));
      const auto local = blob.as_mask();
      if (raster::connected_components(local).count != 1) continue;
      if (shape.check_elongation && elongation(local) < spec.min_elongation) continue;
      if (!fits(blob, ox, oy, occupied, spec.width, spec.height, spec.margin)) continue;
      stamp(blob, ox, oy, occupied, mask);
      placed = true;
    }
    if (!placed)
      throw Error("could not place " + std::string(what) + " " + std::to_string(n + 1) + " of " +
                  std::to_string(count) + " within " + std::to_string(spec.max_attempts) +
                  " attempts; the scene is too crowded");
  }
}

// Sum of a few plane waves, rescaled to [-1, 1].
std::vector<double> shading_field(const SceneSpec& spec, Rng& rng) {
  constexpr int kWaves = 6;
  std::array<double, kWaves> kx{}, ky{}, phase{};
  for (int i = 0; i < kWaves; ++i) {
    const double wavelength = spec.shading_wavelength * rng.uniform(1.0, 3.0);
    const double dir = rng.uniform(0.0, 2 * std::numbers::pi);
    kx[i] = 2 * std::numbers::pi / wavelength * std::cos(dir);
    ky[i] = 2 * std::numbers::pi / wavelength * std::sin(dir);
    phase[i] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  std::vector<double> f(static_cast<std::size_t>(spec.width) * spec.height);
  double lo = 0.0, hi = 0.0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      double v = 0.0;
      for (int i = 0; i < kWaves; ++i) v += std::cos(kx[i] * x + ky[i] * y + phase[i]);
      f[static_cast<std::size_t>(y) * spec.width + x] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  for (double& v : f) v = half > 0.0 ? (v - mid) / half : 0.0;
  return f;
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 1 || height < 1) throw ConfigError("scene dimensions must be positive");
  if (scar_count < 0 || confounder_count < 0) throw ConfigError("object counts must be >= 0");
  if (!(min_elongation >= 1.0) || max_elongation < min_elongation)
    throw ConfigError("elongation range must satisfy 1 <= min <= max");
  if (!(scar_minor_min > 0.0) || scar_minor_max < scar_minor_min) throw ConfigError("invalid scar size range");
  if (!(confounder_radius_min > 0.0) || confounder_radius_max < confounder_radius_min)
    throw ConfigError("invalid confounder size range");
  if (confounder_max_elongation < 1.0) throw ConfigError("confounder_max_elongation must be >= 1");
  if (boundary_noise < 0.0 || boundary_noise >= 0.5) throw ConfigError("boundary_noise must lie in [0, 0.5)");
  if (superellipse_exponent <= 0.0) throw ConfigError("superellipse_exponent must be > 0");
  if (shading_amplitude < 0.0 || shading_amplitude >= 1.0) throw ConfigError("shading_amplitude must lie in [0, 1)");
  if (!(shading_wavelength > 0.0)) throw ConfigError("shading_wavelength must be > 0");
  if (margin < 1) throw ConfigError("margin must be >= 1 so objects stay separate");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  for (const Signature* s : {&forest, &fern, &confounder})
    for (double v : s->sigma)
      if (v < 0.0) throw ConfigError("signature sigma must be >= 0");
  if (fern.mean == forest.mean || fern.mean == confounder.mean || forest.mean == confounder.mean)
    throw ConfigError("forest, fern and confounder signatures must differ in mean");
}

json SceneSpec::to_json() const {
  return {{"width", width},
          {"height", height},
          {"scar_count", scar_count},
          {"min_elongation", min_elongation},
          {"max_elongation", max_elongation},
          {"scar_minor_min", scar_minor_min},
          {"scar_minor_max", scar_minor_max},
          {"confounder_count", confounder_count},
          {"confounder_radius_min", confounder_radius_min},
          {"confounder_radius_max", confounder_radius_max},
          {"confounder_max_elongation", confounder_max_elongation},
          {"boundary_noise", boundary_noise},
          {"superellipse_exponent", superellipse_exponent},
          {"margin", margin},
          {"shading_amplitude", shading_amplitude},
          {"shading_wavelength", shading_wavelength},
          {"forest", signature_json(forest)},
          {"fern", signature_json(fern)},
          {"confounder", signature_json(confounder)},
          {"max_attempts", max_attempts},
          {"seed", seed}};
}

SceneSpec SceneSpec::from_json(const json& j) {
  SceneSpec s;
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.scar_count = j.value("scar_count", s.scar_count);
  s.min_elongation = j.value("min_elongation", s.min_elongation);
  s.max_elongation = j.value("max_elongation", s.max_elongation);
  s.scar_minor_min = j.value("scar_minor_min", s.scar_minor_min);
  s.scar_minor_max = j.value("scar_minor_max", s.scar_minor_max);
  s.confounder_count = j.value("confounder_count", s.confounder_count);
  s.confounder_radius_min = j.value("confounder_radius_min", s.confounder_radius_min);
  s.confounder_radius_max = j.value("confounder_radius_max", s.confounder_radius_max);
  s.confounder_max_elongation = j.value("confounder_max_elongation", s.confounder_max_elongation);
  s.boundary_noise = j.value("boundary_noise", s.boundary_noise);
  s.superellipse_exponent = j.value("superellipse_exponent", s.superellipse_exponent);
  s.margin = j.value("margin", s.margin);
  s.shading_amplitude = j.value("shading_amplitude", s.shading_amplitude);
  s.shading_wavelength = j.value("shading_wavelength", s.shading_wavelength);
  if (j.contains("forest")) s.forest = signature_from(j["forest"], s.forest);
  if (j.contains("fern")) s.fern = signature_from(j["fern"], s.fern);
  if (j.contains("confounder")) s.confounder = signature_from(j["confounder"], s.confounder);
  s.max_attempts = j.value("max_attempts", s.max_attempts);
  s.seed = j.value("seed", s.seed);
  return s;
}

double elongation(const raster::MaskRaster& mask) {
  double n = 0, sx = 0, sy = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        n += 1;
        sx += x;
        sy += y;
      }
  if (n < 2) return 1.0;
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
      }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double tr = cxx + cyy, det = cxx * cyy - cxy * cxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  const double l1 = tr / 2 + disc, l2 = tr / 2 - disc;
  if (l2 <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(l1 / l2);
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng shapes(derive_seed(spec.seed, 1));
  Rng noise(derive_seed(spec.seed, 2));
  Rng relief(derive_seed(spec.seed, 3));

  Scene scene;
  scene.mask = raster::MaskRaster::zeros(spec.width, spec.height);
  scene.confounder_mask = raster::MaskRaster::zeros(spec.width, spec.height);
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(spec.width) * spec.height, 0);

  place_objects(spec.scar_count,
                {spec.scar_minor_min, spec.scar_minor_max, spec.min_elongation, spec.max_elongation, true}, spec,
                shapes, occupied, scene.mask, "scar");
  place_objects(spec.confounder_count,
                {spec.confounder_radius_min, spec.confounder_radius_max, 1.0, spec.confounder_max_elongation, false},
                spec, shapes, occupied, scene.confounder_mask, "confounder");

  auto& r = scene.raster;
  r = raster::MultibandRaster::zeros(spec.width, spec.height, 4);
  r.band_names = {"blue", "green", "red", "nir"};
  r.georef = raster::GeoTransform{500000.0, 7400000.0, 8.0, 8.0, "EPSG:31983"};
  const std::size_t plane = r.plane_size();
  const std::vector<double> shade = shading_field(spec, relief);
  for (std::size_t i = 0; i < plane; ++i) {
    const double gain = 1.0 + spec.shading_amplitude * shade[i];
    const Signature& sig = scene.mask.values[i]              ? spec.fern
                           : scene.confounder_mask.values[i] ? spec.confounder
                                                             : spec.forest;
    for (int b = 0; b < 4; ++b) {
      const double v = std::round(noise.normal(gain * sig.mean[b], sig.sigma[b]));
      r.pixels[b * plane + i] = std::clamp(v, 0.0, 1023.0);
    }
  }
  return scene;
}

}  // namespace relict::synthetic
