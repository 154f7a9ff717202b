#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "relict/raster/raster.hpp"

namespace relict::clustering {

/// Row-major n x dims matrix of band vectors.
struct PixelMatrix {
  int dims = 0;
  std::vector<double> values;

  std::size_t rows() const { return dims ? values.size() / dims : 0; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dims, static_cast<std::size_t>(dims)}; }
};

struct KMeansOptions {
  int k = 2;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-4;  ///< stop once the largest centroid displacement is below this
  bool standardize = false;
  std::size_t max_samples = 2'000'000;  ///< larger inputs are subsampled (seeded) for fitting
};

struct KMeansModel {
  int k = 0;
  int dims = 0;
  std::vector<double> centroids;  ///< k x dims, input units
  double inertia = 0.0;
  int iterations_run = 0;
  std::uint64_t seed = 0;
  bool standardized = false;
  std::vector<double> band_mean;   ///< present when standardized
  std::vector<double> band_scale;  ///< present when standardized
  std::vector<double> inertia_history;  ///< after every assignment step

  std::span<const double> centroid(int i) const {
    return {centroids.data() + static_cast<std::size_t>(i) * dims, static_cast<std::size_t>(dims)};
  }
};

/// Lloyd iterations from k-means++ seeding. Deterministic for fixed
/// (pixels, options). Throws if inertia ever increases between iterations.
KMeansModel fit_kmeans(const PixelMatrix& pixels, const KMeansOptions& options);

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
int assign_one(const KMeansModel& model, std::span<const double> pixel);
std::vector<int> assign(const KMeansModel& model, const PixelMatrix& pixels);

/// Modal label among valid pixels; ties go to the lowest label.
int predominant_label(std::span<const int> labels, std::span<const std::uint8_t> validity);

/// Pools every non-void pixel of the rasters (band vectors), then keeps a
/// seeded uniform subsample of at most `max_samples` rows.
PixelMatrix collect_valid_pixels(std::span<const raster::MultibandRaster* const> rasters,
                                 std::size_t max_samples, std::uint64_t seed);

void save_model(const KMeansModel& model, const std::filesystem::path& path);
KMeansModel load_model(const std::filesystem::path& path);

}  // namespace relict::clustering
