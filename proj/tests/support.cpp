#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <unistd.h>

#include "relict/nn/autograd.hpp"

namespace relict::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("relict_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

raster::MaskRaster random_mask(int width, int height, double density, Rng& rng) {
  auto m = raster::MaskRaster::zeros(width, height);
  for (auto& v : m.values) v = rng.uniform() < density ? 1 : 0;
  return m;
}

raster::MultibandRaster random_raster(int width, int height, int bands, Rng& rng, double lo, double hi) {
  auto r = raster::MultibandRaster::zeros(width, height, bands);
  for (auto& v : r.pixels) v = std::floor(rng.uniform(lo, hi));
  return r;
}

std::vector<GradSample> check_gradients(const std::vector<std::pair<std::string, nn::Var>>& params,
                                        const std::function<nn::Var()>& loss, std::size_t samples,
                                        std::uint64_t seed, double step) {
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& [name, v] : params) {
    offsets.push_back(total);
    total += v->value.numel();
  }
  Rng rng(seed);
  const auto picks = rng.sample_indices(total, std::min(samples, total));

  for (const auto& [name, v] : params) v->grad = nn::Tensor();
  nn::backward(loss());

  std::vector<GradSample> out;
  for (std::size_t flat : picks) {
    const std::size_t p = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                    offsets.begin()) - 1;
    const std::size_t idx = flat - offsets[p];
    auto& node = *params[p].second;
    const double analytic = node.grad.numel() ? node.grad.data()[idx] : 0.0;
    double& w = node.value.data()[idx];
    const double saved = w;
    double plus, minus;
    {
      nn::NoGradGuard guard;
      w = saved + step;
      plus = loss()->value.data()[0];
      w = saved - step;
      minus = loss()->value.data()[0];
    }
    w = saved;
    const double numeric = (plus - minus) / (2 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    out.push_back({params[p].first, idx, analytic, numeric, std::abs(analytic - numeric) / denom});
  }
  return out;
}

double max_rel_error(const std::vector<GradSample>& s) {
  double m = 0.0;
  for (const auto& g : s) m = std::max(m, g.rel_error);
  return m;
}

std::vector<datasets::LabeledTile> scar_tiles(int count, int tile_size, std::uint64_t seed, bool include_negative) {
  Rng rng(seed);
  std::vector<datasets::LabeledTile> tiles;
  const std::size_t area = static_cast<std::size_t>(tile_size) * tile_size;
  for (int i = 0; i < count; ++i) {
    datasets::LabeledTile lt;
    auto& t = lt.tile;
    t.tile_size = tile_size;
    t.bands = 4;
    t.grid_col = i;
    t.window = {i * tile_size, 0, tile_size, tile_size};
    t.pixels.assign(area * 4, 0.0);
    t.validity.assign(area, 1);
    lt.target_mask.assign(area, 0);
    const bool negative = include_negative && i == 0;
    if (!negative) {
      // Square or bar of random size and position.
      const int w = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(tile_size / 2)));
      const int h = (i % 2) ? 3 + static_cast<int>(rng.below(4)) : w;
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(tile_size - w)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(tile_size - h)));
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) lt.target_mask[static_cast<std::size_t>(y) * tile_size + x] = 1;
    }
    const double forest[4] = {60, 80, 50, 300}, fern[4] = {80, 115, 90, 400};
    for (int b = 0; b < 4; ++b)
      for (std::size_t p = 0; p < area; ++p)
        t.pixels[b * area + p] = std::round(rng.normal(lt.target_mask[p] ? fern[b] : forest[b], 4.0));
    lt.label = negative ? 0 : 1;
    tiles.push_back(std::move(lt));
  }
  return tiles;
}

}  // namespace relict::testing

namespace relict::testing {

app::PipelineConfig micro_pipeline(const std::filesystem::path& root, std::uint64_t scene_seed) {
  app::PipelineConfig cfg;
  cfg.output_root = root;
  app::SyntheticSettings synth;
  synth.spec.width = 128;
  synth.spec.height = 128;
  synth.spec.scar_count = 3;
  synth.spec.confounder_count = 2;
  synth.spec.seed = scene_seed;
  synth.scene_count = 2;
  cfg.synthetic = synth;
  cfg.encoder_preset = "tiny";
  cfg.k_values = {2};
  cfg.augmentation = {{"LD30", 3}};
  cfg.architectures = {models::Architecture::unet};
  cfg.kmeans.drop_classes_below = 1;
  for (auto* t : {&cfg.pretrain, &cfg.finetune}) {
    t->learning_rate = 1e-3;
    t->epochs = 1;
    t->batch_size = 16;
    t->checkpoint_every = 0;
  }
  cfg.finetune.seed = 1;
  return cfg;
}

}  // namespace relict::testing
