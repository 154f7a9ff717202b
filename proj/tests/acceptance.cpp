// Runs every acceptance criterion in order and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any criterion fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "relict/app/commands.hpp"
#include "relict/clustering/kmeans.hpp"
#include "relict/core/error.hpp"
#include "relict/datasets/shards.hpp"
#include "relict/nn/ops.hpp"
#include "support.hpp"

using namespace relict;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 1
Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto truth = testing::random_mask(64, 64, rng.uniform() * 0.4, rng);
    const auto pred = testing::random_mask(64, 64, rng.uniform() * 0.4, rng);
    std::vector<std::uint8_t> valid(64 * 64, 1);
    if (trial % 3 == 0)
      for (auto& v : valid) v = rng.uniform() < 0.9;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (!valid[y * 64 + x]) continue;
        const bool p = pred.at(y, x), t = truth.at(y, x);
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
        tn += !p && !t;
      }
    const auto r = evaluation::confusion(pred.values, truth, valid);
    bool ok = r.tp == tp && r.fp == fp && r.fn == fn && r.tn == tn;
    if (tp + fp) ok = ok && r.precision == static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn) ok = ok && r.recall == static_cast<double>(tp) / static_cast<double>(tp + fn);
    ok = ok && r.precision_defined == (tp + fp > 0) && r.recall_defined == (tp + fn > 0);
    mismatches += !ok;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0, fmt("200 pairs, %d mismatches, %.2f s", mismatches, s)};
}

// 2
Outcome tiling_laws() {
  const auto t0 = Clock::now();
  Rng rng(202);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(300));
    const int h = 1 + static_cast<int>(rng.below(300));
    const int s = 1 + static_cast<int>(rng.below(64));
    auto r = testing::random_raster(w, h, 3, rng);
    for (auto& v : r.nodata) v = rng.uniform() < 0.05;
    for (auto mode : {raster::PadMode::zero_pad, raster::PadMode::crop}) {
      const int rows = mode == raster::PadMode::zero_pad ? (h + s - 1) / s : h / s;
      const int cols = mode == raster::PadMode::zero_pad ? (w + s - 1) / s : w / s;
      const auto dims = raster::grid_dims(w, h, s, mode);
      bool ok = dims.rows == rows && dims.cols == cols;
      if (rows == 0 || cols == 0) {
        failures += !ok;
        continue;
      }
      const auto grid = raster::make_tile_grid(r, s, mode);
      ok = ok && grid.tiles.size() == static_cast<std::size_t>(rows) * cols;
      const auto back = raster::stitch(grid);
      const int cw = std::min(w, cols * s), ch = std::min(h, rows * s);
      ok = ok && back.width == cw && back.height == ch;
      for (int b = 0; ok && b < 3; ++b)
        for (int y = 0; ok && y < ch; ++y)
          for (int x = 0; ok && x < cw; ++x)
            ok = back.at(b, y, x) == r.at(b, y, x) && back.is_void(y, x) == r.is_void(y, x);
      failures += !ok;
    }
  }
  const double s = seconds_since(t0);
  return {failures == 0 && s < 30.0, fmt("100 triples x 2 pad modes, %d failures, %.2f s", failures, s)};
}

// 3
Outcome labeling_rule() {
  Rng rng(303);
  int failures = 0;
  std::size_t positives = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 64 + static_cast<int>(rng.below(200)), h = 64 + static_cast<int>(rng.below(200));
    const auto r = testing::random_raster(w, h, 4, rng);
    const auto m = testing::random_mask(w, h, rng.uniform() * 0.002, rng);
    raster::AreaSplit split;
    split.cut = w / 2;
    split.train_region = {0, 0, w / 2, h};
    split.test_region = {w / 2, 0, w, h};
    const auto grid = raster::make_tile_grid(r, 32);
    const auto ds = datasets::build_labeled_dataset(grid, m, split);
    std::map<std::string, std::map<int, std::size_t>> expect;
    expect["train"] = {{0, 0}, {1, 0}};
    expect["test"] = {{0, 0}, {1, 0}};
    for (const auto& tile : grid.tiles) {
      bool hit = false;
      for (int y = 0; y < 32 && !hit; ++y)
        for (int x = 0; x < 32 && !hit; ++x) {
          const int sy = tile.grid_row * 32 + y, sx = tile.grid_col * 32 + x;
          hit = sy < h && sx < w && m.at(sy, sx);
        }
      const bool train = tile.window.x0 + tile.window.w <= w / 2;
      expect[train ? "train" : "test"][hit ? 1 : 0] += 1;
    }
    positives += expect["train"][1] + expect["test"][1];
    const bool ok = ds.manifest.class_counts == expect && ds.manifest.total == grid.tiles.size();
    failures += !ok;
  }
  return {failures == 0, fmt("40 random masks, %zu positive tiles, %d manifest mismatches", positives, failures)};
}

// 4
Outcome augmentation_arithmetic() {
  auto base = testing::scar_tiles(1, 32, 404, false).front();
  std::vector<datasets::LabeledTile> tiles(422, base);
  const auto n30 = datasets::augment_positives(tiles, 30, 1).size();
  const auto n50 = datasets::augment_positives(tiles, 50, 1).size();
  bool flips_ok = true;
  for (const auto& t : testing::scar_tiles(10, 32, 405, false)) {
    for (auto f : {datasets::Flip::horizontal, datasets::Flip::vertical, datasets::Flip::both}) {
      auto c = t;
      datasets::apply_flip(c.tile, &c.target_mask, f);
      datasets::apply_flip(c.tile, &c.target_mask, f);
      flips_ok = flips_ok && c.tile.pixels == t.tile.pixels && c.target_mask == t.target_mask;
    }
    auto hv = t, hthenv = t;
    datasets::apply_flip(hv.tile, &hv.target_mask, datasets::Flip::both);
    datasets::apply_flip(hthenv.tile, &hthenv.target_mask, datasets::Flip::horizontal);
    datasets::apply_flip(hthenv.tile, &hthenv.target_mask, datasets::Flip::vertical);
    flips_ok = flips_ok && hv.tile.pixels == hthenv.tile.pixels && hv.target_mask == hthenv.target_mask;
  }
  const bool ok = n30 == 12660 && n50 == 21100 && flips_ok;
  return {ok, fmt("422 positives -> %zu (f=30), %zu (f=50); flip laws %s", n30, n50, flips_ok ? "hold" : "violated")};
}

// 5
Outcome kmeans_properties() {
  Rng rng(505);
  clustering::PixelMatrix pm;
  pm.dims = 4;
  std::vector<int> truth;
  const double centres[3][4] = {{100, 100, 100, 300}, {400, 380, 360, 200}, {700, 650, 720, 900}};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 2000; ++i) {
      for (int d = 0; d < 4; ++d) pm.values.push_back(rng.normal(centres[c][d], 20.0));
      truth.push_back(c);
    }
  clustering::KMeansOptions opt;
  opt.k = 3;
  opt.seed = 9;
  const auto model = clustering::fit_kmeans(pm, opt);
  bool monotone = true;
  for (std::size_t i = 1; i < model.inertia_history.size(); ++i)
    monotone = monotone && model.inertia_history[i] <= model.inertia_history[i - 1];
  const auto labels = clustering::assign(model, pm);
  std::array<int, 3> perm{0, 1, 2};
  double agreement = 0.0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += perm[labels[i]] == truth[i];
    agreement = std::max(agreement, static_cast<double>(hits) / static_cast<double>(labels.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));

  opt.k = 1;
  const auto one = clustering::fit_kmeans(pm, opt);
  double worst = 0.0;
  for (int d = 0; d < 4; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < pm.rows(); ++i) mean += pm.values[i * 4 + d];
    mean /= static_cast<double>(pm.rows());
    worst = std::max(worst, std::abs(mean - one.centroids[d]));
  }
  const bool ok = monotone && agreement >= 0.99 && worst <= 1e-9;
  return {ok, fmt("inertia %s over %zu iterations, agreement %.4f, k=1 centroid error %.2e",
                  monotone ? "non-increasing" : "INCREASED", model.inertia_history.size(), agreement, worst)};
}

// 6
Outcome transfer_identity() {
  auto cls = models::build_classifier(models::EncoderSpec::tiny(), 4, 600);
  for (auto& [name, v] : cls->parameters().parameters())
    for (double& x : v->value.values()) x *= 1.01;
  const auto src = cls->snapshot();
  Rng rng(606);
  nn::Tensor probe({2, 4, 32, 32});
  for (double& v : probe.values()) v = std::floor(rng.uniform() * 1024.0);
  bool equal = true;
  for (auto arch : {models::Architecture::unet, models::Architecture::fpn, models::Architecture::linknet}) {
    auto seg = models::build_segmenter(models::ModelSpec::segmenter(arch, models::EncoderSpec::tiny()), 601);
    models::transfer_encoder(src, *seg);
    const auto dst = seg->snapshot();
    for (const auto& [key, t] : src.tensors)
      if (key.rfind("encoder.", 0) == 0) equal = equal && dst.tensors.count(key) && dst.tensors.at(key) == t;
    nn::NoGradGuard g;
    const auto fa = cls->encoder_features(probe, false);
    const auto fb = seg->encoder_features(probe, false);
    for (std::size_t i = 0; i < fa.size(); ++i) equal = equal && fa[i]->value == fb[i]->value;
  }
  bool rejected = false;
  auto other = models::EncoderSpec::tiny();
  other.growth_rate = 16;
  auto mismatched = models::build_segmenter(models::ModelSpec::segmenter(models::Architecture::unet, other), 1);
  try {
    models::transfer_encoder(src, *mismatched);
  } catch (const Error&) {
    rejected = true;
  }
  return {equal && rejected, fmt("encoder tensors and feature maps %s; mismatched spec %s", equal ? "identical" : "DIFFER",
                                 rejected ? "rejected" : "ACCEPTED")};
}

// 7
Outcome gradient_check() {
  std::string detail;
  bool ok = true;
  for (auto arch : {models::Architecture::unet, models::Architecture::fpn, models::Architecture::linknet}) {
    auto net = models::build_segmenter(models::ModelSpec::segmenter(arch, models::EncoderSpec::tiny()), 707);
    const auto tiles = testing::scar_tiles(2, 32, 708, false);
    nn::Tensor x({2, 4, 32, 32}), target({2, 1, 32, 32});
    for (int n = 0; n < 2; ++n) {
      std::copy(tiles[n].tile.pixels.begin(), tiles[n].tile.pixels.end(), x.data() + n * 4 * 1024);
      std::copy(tiles[n].target_mask.begin(), tiles[n].target_mask.end(), target.data() + n * 1024);
    }
    const auto samples = testing::check_gradients(
        net->parameters().parameters(), [&] { return nn::bce_with_logits(net->forward(x, true), target); }, 32, 709);
    const double err = testing::max_rel_error(samples);
    ok = ok && samples.size() == 32 && err <= 1e-3;
    detail += fmt("%s %.1e  ", models::to_string(arch).c_str(), err);
  }
  return {ok, "max relative error: " + detail};
}

// 8
Outcome memorization() {
  const auto tiles = testing::scar_tiles(8, 32, 808);
  training::TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.seed = 809;
  cfg.checkpoint_every = 0;
  bool ok = true;
  std::string detail;
  for (auto arch : {models::Architecture::unet, models::Architecture::fpn, models::Architecture::linknet}) {
    const auto t0 = Clock::now();
    auto net = models::build_segmenter(models::ModelSpec::segmenter(arch, models::EncoderSpec::tiny()), 810);
    training::train_segmenter(*net, tiles, cfg);
    const double acc = training::pixel_accuracy(*net, tiles);
    const double s = seconds_since(t0);
    ok = ok && acc >= 0.99 && s < 300.0;
    detail += fmt("%s acc %.4f in %.0f s  ", models::to_string(arch).c_str(), acc, s);
  }
  return {ok, detail};
}

void run_stages(const app::PipelineConfig& cfg, const std::vector<std::string>& stages,
                const app::CommandOptions& opts = {}) {
  for (const auto& s : stages) app::run_command(s, cfg, opts);
}

const std::vector<std::string> kAllStages{"synth",    "prepare-labeled", "prepare-cluster", "augment", "pretrain",
                                          "train",    "predict",         "evaluate"};

// 9
Outcome end_to_end(const fs::path& work) {
  auto cfg = app::load_config(fs::path(RELICT_SOURCE_DIR) / "configs" / "desk_scale.json", false);
  cfg.output_root = work / "desk";
  const auto t0 = Clock::now();
  run_stages(cfg, kAllStages);
  const double s = seconds_since(t0);
  const app::Layout L{cfg.output_root};
  const training::Combination combo{training::Framework::proposed, models::Architecture::unet, 4, "LD30"};
  const auto report = nlohmann::json::parse(slurp(L.evaluation_dir(combo) / "report.json"));
  const double p = report.at("precision"), r = report.at("recall");
  const bool ok = r >= 0.90 && p >= 0.50 && s < 900.0;
  return {ok, fmt("recall %.3f precision %.3f (TP %d FP %d FN %d), %.0f s", r, p, report.at("TP").get<int>(),
                  report.at("FP").get<int>(), report.at("FN").get<int>(), s)};
}

// 10
Outcome grid_structure(const fs::path& work) {
  auto cfg = testing::micro_pipeline(work / "grid42");
  cfg.k_values = training::kSweepClusterCounts;
  cfg.augmentation = {{"LD30", 30}, {"LD50", 50}};
  cfg.architectures = {models::Architecture::unet, models::Architecture::fpn, models::Architecture::linknet};
  cfg.workers = 4;
  app::run_command("synth", cfg, {});
  const auto summary = app::run_command("grid", cfg, {});
  const auto report = nlohmann::json::parse(slurp(app::Layout{cfg.output_root}.grid_dir() / "grid_report.json"));
  const auto& rows = report.at("rows");
  int standard = 0, proposed = 0;
  std::map<std::string, std::pair<int, int>> best;  // (framework/arch) -> flagged precision, recall
  for (const auto& r : rows) {
    (r.at("framework") == "standard" ? standard : proposed) += 1;
    const std::string flags = r.at("flags");
    auto& b = best[r.at("framework").get<std::string>() + "/" + r.at("arch").get<std::string>()];
    b.first += flags.find("best_precision") != std::string::npos;
    b.second += flags.find("best_recall") != std::string::npos;
  }
  bool maxima = best.size() == 6;
  for (const auto& [k, v] : best) maxima = maxima && v.first >= 1 && v.second >= 1;
  const bool have_cmp = fs::exists(app::Layout{cfg.output_root}.grid_dir() / "comparison.json");

  // directional comparison over three model seeds on a reduced grid; reported only
  std::string direction;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = testing::micro_pipeline(work / ("cmp" + std::to_string(seed)));
    c.architectures = {models::Architecture::unet, models::Architecture::fpn, models::Architecture::linknet};
    c.k_values = {4};
    c.augmentation = {{"LD30", 30}};
    c.pretrain.epochs = 5;
    c.finetune.epochs = 5;
    c.seeds.model = 100 + seed;
    c.workers = 3;
    app::run_command("synth", c, {});
    app::run_command("grid", c, {});
    const auto cmp = nlohmann::json::parse(slurp(app::Layout{c.output_root}.grid_dir() / "comparison.json"));
    int wins = 0, groups = 0;
    for (const auto& g : cmp)
      if (g.contains("proposed_best_beats_standard_recall")) {
        ++groups;
        wins += g["proposed_best_beats_standard_precision"].get<bool>();
      }
    direction += fmt("seed %d: proposed beats standard precision in %d/%d  ", static_cast<int>(seed), wins, groups);
  }
  const bool ok = rows.size() == 42 && standard == 6 && proposed == 36 && maxima && have_cmp;
  return {ok, fmt("%zu rows (%d standard, %d proposed, %d failed), maxima %s; ", rows.size(), standard, proposed,
                  summary.at("failed").get<int>(), maxima ? "flagged" : "MISSING") +
                  direction};
}

// 11
Outcome determinism(const fs::path& work) {
  std::vector<fs::path> roots{work / "det_a", work / "det_b"};
  for (std::size_t i = 0; i < roots.size(); ++i) {
    auto cfg = testing::micro_pipeline(roots[i]);
    cfg.finetune.epochs = 2;
    cfg.workers = i == 0 ? 1 : 3;
    run_stages(cfg, kAllStages);
    app::run_command("grid", cfg, {});
  }
  int compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), roots[0]);
    const auto name = rel.filename().string();
    const auto other = roots[1] / rel;
    if (name == "manifest.json" || name == "grid_report.csv") {
      ++compared;
      differing += slurp(entry.path()) != slurp(other);
    } else if (entry.path().extension() == ".ckpt") {
      ++compared;
      const auto a = models::load_checkpoint(entry.path()), b = models::load_checkpoint(other);
      differing += a.store.checksum() != b.store.checksum() || slurp(entry.path()) != slurp(other);
    }
  }
  return {compared > 0 && differing == 0,
          fmt("%d manifests/checkpoints/grid reports compared across two runs, %d differ", compared, differing)};
}

}  // namespace

int main() {
  testing::TempDir work("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"tiling laws", tiling_laws},
      {"labeling rule", labeling_rule},
      {"augmentation arithmetic", augmentation_arithmetic},
      {"k-means properties", kmeans_properties},
      {"transfer identity", transfer_identity},
      {"gradient check", gradient_check},
      {"memorization", memorization},
      {"end-to-end desk-scale run", [&] { return end_to_end(work.path()); }},
      {"grid structure", [&] { return grid_structure(work.path()); }},
      {"determinism", [&] { return determinism(work.path()); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " AC" << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
