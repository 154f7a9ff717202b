#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "relict/raster/raster.hpp"

namespace relict::synthetic {

/// Mean digital number and per-band noise for blue, green, red, NIR.
struct Signature {
  std::array<double, 4> mean{};
  std::array<double, 4> sigma{};
  bool operator==(const Signature&) const = default;
};

struct SceneSpec {
  int width = 512;
  int height = 512;
  int scar_count = 12;
  double min_elongation = 2.5;  ///< major/minor axis ratio from second moments
  double max_elongation = 4.5;
  double scar_minor_min = 3.0;  ///< semi-minor axis range, pixels
  double scar_minor_max = 6.0;
  int confounder_count = 6;
  double confounder_radius_min = 5.0;
  double confounder_radius_max = 10.0;
  double confounder_max_elongation = 2.0;
  double boundary_noise = 0.15;  ///< relative radial perturbation amplitude
  double superellipse_exponent = 2.5;
  int margin = 2;  ///< empty pixels kept between objects
  /// Smooth multiplicative shading (relief illumination) applied to every
  /// land cover: values scale by 1 + shading_amplitude * f, f in [-1, 1].
  double shading_amplitude = 0.12;
  double shading_wavelength = 160.0;  ///< shortest wave of the shading field, pixels
  Signature forest{{62, 78, 52, 310}, {3, 4, 4, 18}};
  Signature fern{{78, 112, 86, 390}, {4, 5, 5, 20}};
  Signature confounder{{80, 110, 88, 250}, {4, 5, 5, 20}};
  int max_attempts = 2000;  ///< placement retries per object
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing members keep their defaults.
  static SceneSpec from_json(const nlohmann::json& j);
  bool operator==(const SceneSpec&) const = default;
};

struct Scene {
  raster::MultibandRaster raster;
  raster::MaskRaster mask;             ///< fern scars
  raster::MaskRaster confounder_mask;  ///< fern-like patches that are not scars
};

/// Forest background with non-touching elongated fern scars and rounder
/// confounder patches under a smooth shading field. Pixel values are integer DNs clamped to [0, 1023].
/// Throws when an object cannot be placed within the retry budget.
Scene generate_scene(const SceneSpec& spec);

/// sqrt(lambda_max / lambda_min) of the pixel-coordinate covariance of the
/// mask's nonzero pixels.
double elongation(const raster::MaskRaster& mask);

}  // namespace relict::synthetic
