#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "relict/app/config.hpp"
#include "relict/core/rng.hpp"
#include "relict/datasets/datasets.hpp"
#include "relict/models/network.hpp"
#include "relict/raster/raster.hpp"

namespace relict::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

raster::MaskRaster random_mask(int width, int height, double density, Rng& rng);
raster::MultibandRaster random_raster(int width, int height, int bands, Rng& rng, double lo = 0.0,
                                      double hi = 1000.0);

struct GradSample {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

/// Central-difference check on `samples` scalars drawn uniformly from all
/// entries of `params`. `loss` must rebuild the graph on every call.
std::vector<GradSample> check_gradients(const std::vector<std::pair<std::string, nn::Var>>& params,
                                        const std::function<nn::Var()>& loss, std::size_t samples,
                                        std::uint64_t seed, double step = 1e-5);

double max_rel_error(const std::vector<GradSample>& s);

/// `count` distinct labeled tiles (4 bands) each holding a bright square or
/// bar scar on a noisy dark background; the first tile may be all background.
std::vector<datasets::LabeledTile> scar_tiles(int count, int tile_size, std::uint64_t seed,
                                              bool include_negative = true);

}  // namespace relict::testing

namespace relict::testing {

/// Small synthetic pipeline (128x128 scenes, tiny encoder, one epoch) rooted
/// at `root`; every stage finishes in seconds.
app::PipelineConfig micro_pipeline(const std::filesystem::path& root, std::uint64_t scene_seed = 5);

}  // namespace relict::testing
