#include "relict/app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "relict/clustering/kmeans.hpp"
#include "relict/core/error.hpp"
#include "relict/core/hash.hpp"
#include "relict/core/rng.hpp"
#include "relict/datasets/shards.hpp"
#include "relict/raster/raster_io.hpp"
#include "relict/raster/split.hpp"

namespace relict::app {

namespace fs = std::filesystem;
using json = nlohmann::json;
using training::Combination;
using training::Framework;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return kMissingDependency;
  return kRuntimeFailure;
}

namespace {

std::mutex g_log_mutex;

void log(const CommandOptions& opts, const std::string& line) {
  if (!opts.verbose) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << line << std::endl;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

// Inputs the user supplies are a config problem when absent; inputs the
// pipeline generates name their producer.
void require_input(const PipelineConfig& cfg, const fs::path& path, bool generated_by_synth) {
  if (fs::exists(path)) return;
  if (generated_by_synth && cfg.synthetic) throw MissingArtifactError("synthetic input " + path.string() + " not found", "synth");
  throw ConfigError("input file " + path.string() + " does not exist");
}

void require_artifact(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifactError(what + " not found at " + path.string(), producer);
}

int expected_bands(const PipelineConfig& cfg) { return cfg.encoder().input_channels; }

raster::PolygonSet pixel_polygons(const fs::path& path, const raster::MultibandRaster& templ) {
  raster::FeatureCollection fc = raster::load_geojson(path);
  if (fc.space == raster::CoordinateSpace::pixel) return fc.polygons;
  if (!templ.georef) throw ConfigError(path.string() + " uses map coordinates but the scene has no georeference");
  return raster::to_pixel_space(fc.polygons, *templ.georef);
}

bool is_vector_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".geojson" || ext == ".json";
}

raster::MultibandRaster load_scene(const PipelineConfig& cfg, const fs::path& path) {
  const bool synth_default = !cfg.labeled_scene && cfg.cluster_scenes.empty();
  require_input(cfg, path, synth_default);
  raster::MultibandRaster scene = raster::load_raster(path, expected_bands(cfg));
  if (cfg.void_regions && path == cfg.labeled_scene_path()) {
    require_input(cfg, *cfg.void_regions, false);
    scene = raster::clip_regions(scene, pixel_polygons(*cfg.void_regions, scene));
  }
  return scene;
}

struct LabeledScene {
  raster::MultibandRaster raster;
  raster::MaskRaster truth;
  raster::AreaSplit split;
};

LabeledScene load_labeled_scene(const PipelineConfig& cfg) {
  LabeledScene s;
  s.raster = load_scene(cfg, cfg.labeled_scene_path());
  const fs::path labels = cfg.labels_path();
  require_input(cfg, labels, !cfg.labels);
  if (is_vector_file(labels)) {
    s.truth = raster::rasterize_mask(pixel_polygons(labels, s.raster), s.raster);
  } else {
    s.truth = raster::raster_to_mask(raster::load_raster(labels, 1));
    if (s.truth.width != s.raster.width || s.truth.height != s.raster.height)
      throw ConfigError("label raster " + labels.string() + " does not match the scene's dimensions");
  }
  s.split = raster::split_train_test(s.raster, s.truth, cfg.split_ratio);
  return s;
}

json split_json(const raster::AreaSplit& s) {
  auto rect = [](const raster::PixelRect& r) { return json{r.x0, r.y0, r.x1, r.y1}; };
  return {{"axis", s.axis == raster::CutAxis::vertical ? "vertical" : "horizontal"},
          {"cut", s.cut},
          {"train_on_low_side", s.train_on_low_side},
          {"train_region", rect(s.train_region)},
          {"test_region", rect(s.test_region)},
          {"train_landslides", s.train_landslide_count},
          {"test_landslides", s.test_landslide_count},
          {"target_ratio", s.target_ratio},
          {"achieved_ratio", s.achieved_ratio}};
}

std::vector<int> selected_ks(const PipelineConfig& cfg, const CommandOptions& opts) {
  std::vector<int> ks = opts.k_values.empty() ? cfg.k_values : opts.k_values;
  for (int k : ks) Combination{Framework::proposed, models::Architecture::unet, k, "LD"}.validate(opts.allow_any_k);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::vector<std::string> selected_datasets(const PipelineConfig& cfg, const CommandOptions& opts) {
  std::vector<std::string> names;
  if (opts.datasets.empty()) {
    for (const auto& [name, f] : cfg.augmentation) names.push_back(name);
  } else {
    for (const auto& n : opts.datasets) {
      if (!cfg.augmentation.count(n)) throw ConfigError("dataset '" + n + "' has no augmentation factor in the config");
      names.push_back(n);
    }
  }
  return names;
}

bool manifest_fresh(const fs::path& dir, const std::string& hash) {
  if (!fs::exists(dir / "manifest.json")) return false;
  return datasets::read_manifest(dir).config_hash == hash;
}

bool checkpoint_fresh(const fs::path& path, const std::string& hash) {
  if (!fs::exists(path)) return false;
  const auto ckpt = models::load_checkpoint(path);
  return ckpt.provenance.value("config_hash", std::string()) == hash;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; returns the error
// message per failed index.
std::vector<std::optional<std::string>> parallel_for(std::size_t n, int workers,
                                                     const std::function<void(std::size_t)>& fn) {
  std::vector<std::optional<std::string>> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return errors;
}

// ---- stages ----------------------------------------------------------------

json prepare_labeled_stage(const PipelineConfig& cfg) {
  const Layout layout{cfg.output_root};
  LabeledScene scene = load_labeled_scene(cfg);
  const auto grid = raster::make_tile_grid(scene.raster, cfg.tile_size, cfg.pad_mode);
  datasets::LabeledDataset ds = datasets::build_labeled_dataset(grid, scene.truth, scene.split);
  ds.manifest.source_scenes = {cfg.labeled_scene_path().filename().string()};
  ds.manifest.split_ratio = cfg.split_ratio;
  ds.manifest.config_hash = cfg.hash();
  ds.manifest.validate();
  datasets::write_labeled(layout.labeled_dir(), ds);
  write_json(layout.labeled_dir() / "split.json", split_json(scene.split));
  return {{"dataset", "labeled"},
          {"tiles", ds.manifest.total},
          {"class_counts", datasets::manifest_to_json(ds.manifest)["class_counts"]},
          {"dropped_void_tiles", ds.manifest.dropped_void_tiles},
          {"split", split_json(scene.split)}};
}

json prepare_cluster_stage(const PipelineConfig& cfg, const std::vector<int>& ks, const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  std::vector<raster::MultibandRaster> scenes;
  std::vector<std::string> names;
  for (const auto& p : cfg.cluster_scene_paths()) {
    scenes.push_back(load_scene(cfg, p));
    names.push_back(p.filename().string());
  }
  std::vector<const raster::MultibandRaster*> ptrs;
  for (const auto& s : scenes) ptrs.push_back(&s);
  const clustering::PixelMatrix pixels = clustering::collect_valid_pixels(ptrs, cfg.kmeans.max_samples, cfg.seeds.kmeans);
  std::vector<raster::TileGrid> grids;
  for (const auto& s : scenes) grids.push_back(raster::make_tile_grid(s, cfg.tile_size, cfg.pad_mode));

  json out = json::array();
  for (int k : ks) {
    log(opts, "[prepare-cluster] k=" + std::to_string(k));
    clustering::KMeansOptions ko;
    ko.k = k;
    ko.seed = cfg.seeds.kmeans;
    ko.max_iter = cfg.kmeans.max_iter;
    ko.tol = cfg.kmeans.tol;
    ko.standardize = cfg.kmeans.standardize;
    ko.max_samples = cfg.kmeans.max_samples;
    const auto model = clustering::fit_kmeans(pixels, ko);
    datasets::ClusterDataset ds = datasets::build_cluster_dataset(grids, model);
    const std::size_t before = ds.tiles.size();
    std::map<std::string, std::size_t> raw_counts;
    for (int c = 0; c < k; ++c) raw_counts[std::to_string(c)] = 0;
    for (const auto& t : ds.tiles) ++raw_counts[std::to_string(t.cluster_label)];
    log(opts, "[prepare-cluster] k=" + std::to_string(k) + " counts before balancing " + json(raw_counts).dump());
    ds.tiles = datasets::balance_classes(ds.tiles, k, cfg.seeds.balance, cfg.kmeans.drop_classes_below);
    datasets::recount(ds.manifest, ds.tiles);
    ds.manifest.source_scenes = names;
    ds.manifest.k = k;
    ds.manifest.seeds = {{"kmeans", cfg.seeds.kmeans}, {"balance", cfg.seeds.balance}};
    ds.manifest.config_hash = cfg.hash();
    ds.manifest.validate();
    const fs::path dir = layout.cluster_dir(k);
    datasets::write_cluster(dir, ds);
    clustering::save_model(model, dir / "kmeans.json");
    out.push_back({{"k", k},
                   {"tiles_before_balance", before},
                   {"counts_before_balance", raw_counts},
                   {"tiles", ds.manifest.total},
                   {"inertia", model.inertia},
                   {"iterations", model.iterations_run}});
  }
  return out;
}

json augment_stage(const PipelineConfig& cfg, const std::vector<std::string>& names) {
  const Layout layout{cfg.output_root};
  require_artifact(layout.labeled_dir() / "manifest.json", "labeled dataset", "prepare-labeled");
  const datasets::LabeledDataset base = datasets::read_labeled(layout.labeled_dir());
  json out = json::array();
  for (const auto& name : names) {
    const int factor = cfg.augmentation.at(name);
    datasets::LabeledDataset ds;
    ds.tiles = datasets::augment_positives(base.tiles, factor, cfg.seeds.augment);
    ds.manifest = base.manifest;
    ds.manifest.augmentation_factor = factor;
    ds.manifest.seeds["augment"] = cfg.seeds.augment;
    ds.manifest.config_hash = cfg.hash();
    datasets::recount(ds.manifest, ds.tiles);
    ds.manifest.validate();
    datasets::write_labeled(layout.augmented_dir(name), ds);
    out.push_back({{"dataset", name},
                   {"factor", factor},
                   {"tiles", ds.manifest.total},
                   {"class_counts", datasets::manifest_to_json(ds.manifest)["class_counts"]}});
  }
  return out;
}

json pretrain_stage(const PipelineConfig& cfg, int k, const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  require_artifact(layout.cluster_dir(k) / "manifest.json", "cluster dataset for k=" + std::to_string(k),
                   "prepare-cluster");
  const datasets::ClusterDataset ds = datasets::read_cluster(layout.cluster_dir(k));
  log(opts, "[pretrain] k=" + std::to_string(k) + " tiles=" + std::to_string(ds.tiles.size()));
  const json provenance{{"stage", "pretrain"}, {"k", k}, {"config_hash", cfg.hash()},
                        {"model_seed", cfg.seeds.model}, {"pretrain", cfg.pretrain.to_json()}};
  training::TrainRecord record;
  auto classifier = models::build_classifier(cfg.encoder(), k, cfg.seeds.model, cfg.input_scale);
  record = training::pretrain(*classifier, ds.tiles, cfg.pretrain,
                              training::directory_sink(layout.pretrain_dir(k), provenance));
  models::save_checkpoint(models::make_checkpoint(*classifier, provenance), layout.pretrain_weights(k));
  write_json(layout.pretrain_dir(k) / "record.json", {{"record", record.to_json()}, {"provenance", provenance}});
  return {{"k", k},
          {"tiles", ds.tiles.size()},
          {"final_loss", record.epochs.back().loss},
          {"final_accuracy", record.epochs.back().accuracy},
          {"checksum", record.final_checksum}};
}

std::vector<datasets::LabeledTile> train_area_tiles(const fs::path& dir) {
  datasets::LabeledDataset ds = datasets::read_labeled(dir);
  std::vector<datasets::LabeledTile> out;
  for (auto& t : ds.tiles)
    if (t.area == datasets::Area::train) out.push_back(std::move(t));
  return out;
}

json train_stage(const PipelineConfig& cfg, const Combination& combo, const std::vector<datasets::LabeledTile>& tiles,
                 const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  models::ParameterStore pretrained;
  training::FrameworkInputs in;
  in.train_tiles = &tiles;
  if (combo.framework == Framework::proposed) {
    require_artifact(layout.pretrain_weights(*combo.k), "pre-trained encoder for k=" + std::to_string(*combo.k),
                     "pretrain");
    pretrained = models::load_checkpoint(layout.pretrain_weights(*combo.k)).store;
    in.pretrained = &pretrained;
  }
  in.encoder = cfg.encoder();
  in.input_scale = cfg.input_scale;
  in.model_seed = cfg.seeds.model;
  in.pretrain = cfg.pretrain;
  in.finetune = cfg.finetune;
  in.allow_any_k = opts.allow_any_k;
  in.checkpoint_root = layout.checkpoint_root();
  in.provenance = {{"config_hash", cfg.hash()}, {"stage", "train"}};
  log(opts, "[train] " + combo.label() + " tiles=" + std::to_string(tiles.size()));
  const training::FrameworkResult result = training::run_framework(combo, in);
  models::save_checkpoint(result.checkpoint, layout.final_weights(combo));
  write_json(layout.checkpoint_dir(combo) / "record.json",
             {{"record", result.record.to_json()},
              {"initial_encoder_checksum", to_hex(result.initial_encoder_checksum)},
              {"provenance", result.checkpoint.provenance}});
  log(opts, "[train] " + combo.label() + " done loss=" + std::to_string(result.record.epochs.back().loss) +
                " seconds=" + std::to_string(result.record.wall_seconds));
  return {{"combination", combo.label()},
          {"final_loss", result.record.epochs.back().loss},
          {"final_accuracy", result.record.epochs.back().accuracy},
          {"checksum", result.record.final_checksum}};
}

models::Checkpoint load_combination_checkpoint(const PipelineConfig& cfg, const Combination& combo, bool force) {
  const Layout layout{cfg.output_root};
  require_artifact(layout.final_weights(combo), "checkpoint for " + combo.label(), "train");
  models::Checkpoint ckpt = models::load_checkpoint(layout.final_weights(combo));
  const std::string produced = ckpt.provenance.value("config_hash", std::string());
  if (!force && produced != cfg.hash())
    throw ConfigError("checkpoint for " + combo.label() + " was produced by config " + produced +
                      ", current config is " + cfg.hash() + " (pass --force to evaluate anyway)");
  return ckpt;
}

models::ModelSpec expected_spec(const PipelineConfig& cfg, const Combination& combo) {
  models::ModelSpec spec = models::ModelSpec::segmenter(combo.arch, cfg.encoder());
  spec.input_scale = cfg.input_scale;
  return spec;
}

evaluation::EvalReport evaluate_stage(const PipelineConfig& cfg, const Combination& combo, const LabeledScene& scene,
                                      const std::vector<std::uint8_t>& test_region, bool force) {
  const Layout layout{cfg.output_root};
  const models::Checkpoint ckpt = load_combination_checkpoint(cfg, combo, force);
  const models::ModelSpec spec = expected_spec(cfg, combo);
  const auto pred = evaluation::predict_scene(ckpt, scene.raster, cfg.threshold, cfg.tile_size, cfg.pad_mode, &spec);
  evaluation::EvalReport report = evaluation::confusion(pred, scene.truth, test_region);
  report.combination = combo.label();
  const fs::path dir = layout.evaluation_dir(combo);
  json j = report.to_json();
  j["config_hash"] = cfg.hash();
  j["checkpoint_config_hash"] = ckpt.provenance.value("config_hash", std::string());
  write_json(dir / "report.json", j);
  evaluation::render_outcome_map(report, dir / "outcome.tif", scene.raster.georef);
  return report;
}

std::vector<std::uint8_t> test_mask(const LabeledScene& scene) {
  return scene.split.region_mask(raster::Area::test, scene.raster.width, scene.raster.height).values;
}

Summary summary(const std::string& command, const PipelineConfig& cfg) {
  return {{"command", command}, {"status", "ok"}, {"config_hash", cfg.hash()}};
}

}  // namespace

std::vector<Combination> selected_combinations(const PipelineConfig& cfg, const CommandOptions& opts) {
  std::vector<Framework> fws;
  if (opts.frameworks.empty()) fws = cfg.frameworks;
  for (const auto& f : opts.frameworks) fws.push_back(training::framework_from_string(f));
  std::vector<models::Architecture> archs;
  if (opts.architectures.empty()) archs = cfg.architectures;
  for (const auto& a : opts.architectures) {
    archs.push_back(models::architecture_from_string(a));
    if (archs.back() == models::Architecture::classifier)
      throw ConfigError("classifier is not a segmentation architecture");
  }
  const bool needs_k = std::find(fws.begin(), fws.end(), Framework::proposed) != fws.end();
  const std::vector<int> ks = needs_k ? selected_ks(cfg, opts) : std::vector<int>{};
  auto combos = training::enumerate_combinations(fws, archs, ks, selected_datasets(cfg, opts));
  for (const auto& c : combos) c.validate(opts.allow_any_k);
  return combos;
}

Summary cmd_synth(const PipelineConfig& cfg, const CommandOptions& opts) {
  if (!cfg.synthetic) throw ConfigError("the config has no synthetic block");
  const auto& settings = *cfg.synthetic;
  json scenes = json::array();
  for (int i = 0; i < settings.scene_count; ++i) {
    synthetic::SceneSpec spec = settings.spec;
    if (i > 0) spec.seed = derive_seed(settings.spec.seed, static_cast<std::uint64_t>(i));
    log(opts, "[synth] scene " + std::to_string(i));
    const synthetic::Scene scene = synthetic::generate_scene(spec);
    const fs::path path = cfg.synthetic_scene_path(i);
    fs::create_directories(path.parent_path());
    raster::save_raster(scene.raster, path, raster::SampleType::uint16);
    if (i == 0) {
      raster::save_raster(raster::mask_to_raster(scene.mask, scene.raster.georef), cfg.synthetic_mask_path(),
                          raster::SampleType::uint8);
      raster::save_raster(raster::mask_to_raster(scene.confounder_mask, scene.raster.georef),
                          cfg.synthetic_confounder_path(), raster::SampleType::uint8);
    }
    scenes.push_back({{"path", path.string()},
                      {"seed", spec.seed},
                      {"scar_pixels", scene.mask.count()},
                      {"confounder_pixels", scene.confounder_mask.count()}});
  }
  json spec_doc = settings.spec.to_json();
  spec_doc["scene_count"] = settings.scene_count;
  write_json(cfg.output_root / "synth" / "scene_spec.json", {{"spec", spec_doc}, {"config_hash", cfg.hash()}});
  Summary s = summary("synth", cfg);
  s["scenes"] = scenes;
  return s;
}

Summary cmd_prepare_labeled(const PipelineConfig& cfg, const CommandOptions&) {
  Summary s = summary("prepare-labeled", cfg);
  s.update(prepare_labeled_stage(cfg));
  return s;
}

Summary cmd_prepare_cluster(const PipelineConfig& cfg, const CommandOptions& opts) {
  Summary s = summary("prepare-cluster", cfg);
  s["datasets"] = prepare_cluster_stage(cfg, selected_ks(cfg, opts), opts);
  return s;
}

Summary cmd_augment(const PipelineConfig& cfg, const CommandOptions& opts) {
  Summary s = summary("augment", cfg);
  s["datasets"] = augment_stage(cfg, selected_datasets(cfg, opts));
  return s;
}

Summary cmd_pretrain(const PipelineConfig& cfg, const CommandOptions& opts) {
  const auto ks = selected_ks(cfg, opts);
  for (int k : ks)
    require_artifact(Layout{cfg.output_root}.cluster_dir(k) / "manifest.json",
                     "cluster dataset for k=" + std::to_string(k), "prepare-cluster");
  std::vector<json> results(ks.size());
  const auto errors = parallel_for(ks.size(), opts.workers.value_or(cfg.workers),
                                   [&](std::size_t i) { results[i] = pretrain_stage(cfg, ks[i], opts); });
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (errors[i]) throw Error("pretrain k=" + std::to_string(ks[i]) + " failed: " + *errors[i]);
  Summary s = summary("pretrain", cfg);
  s["models"] = results;
  return s;
}

Summary cmd_train(const PipelineConfig& cfg, const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  const auto combos = selected_combinations(cfg, opts);
  std::map<std::string, std::vector<datasets::LabeledTile>> tiles;
  for (const auto& c : combos) {
    if (tiles.count(c.dataset)) continue;
    require_artifact(layout.augmented_dir(c.dataset) / "manifest.json", "dataset " + c.dataset, "augment");
    tiles[c.dataset] = train_area_tiles(layout.augmented_dir(c.dataset));
  }
  for (const auto& c : combos)
    if (c.framework == Framework::proposed)
      require_artifact(layout.pretrain_weights(*c.k), "pre-trained encoder for k=" + std::to_string(*c.k), "pretrain");
  std::vector<json> results(combos.size());
  const auto errors = parallel_for(combos.size(), opts.workers.value_or(cfg.workers), [&](std::size_t i) {
    results[i] = train_stage(cfg, combos[i], tiles.at(combos[i].dataset), opts);
  });
  for (std::size_t i = 0; i < combos.size(); ++i)
    if (errors[i]) throw Error("training " + combos[i].label() + " failed: " + *errors[i]);
  Summary s = summary("train", cfg);
  s["models"] = results;
  return s;
}

Summary cmd_predict(const PipelineConfig& cfg, const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  const auto combos = selected_combinations(cfg, opts);
  const raster::MultibandRaster scene = load_scene(cfg, cfg.labeled_scene_path());
  json out = json::array();
  for (const auto& c : combos) {
    const models::Checkpoint ckpt = load_combination_checkpoint(cfg, c, opts.force);
    const models::ModelSpec spec = expected_spec(cfg, c);
    const auto pred = evaluation::predict_scene(ckpt, scene, cfg.threshold, cfg.tile_size, cfg.pad_mode, &spec);
    auto prob = raster::MultibandRaster::zeros(pred.width, pred.height, 1);
    prob.pixels = pred.probabilities;
    prob.georef = scene.georef;
    prob.band_names = {"probability"};
    auto binary = raster::MultibandRaster::zeros(pred.width, pred.height, 1);
    binary.pixels.assign(pred.binary.begin(), pred.binary.end());
    binary.georef = scene.georef;
    binary.band_names = {"landslide"};
    const fs::path dir = layout.prediction_dir(c);
    fs::create_directories(dir);
    raster::save_raster(prob, dir / "probability.tif", raster::SampleType::float32);
    raster::save_raster(binary, dir / "binary.tif", raster::SampleType::uint8);
    out.push_back({{"combination", c.label()},
                   {"positive_pixels", std::count(pred.binary.begin(), pred.binary.end(), 1)},
                   {"path", dir.string()}});
  }
  Summary s = summary("predict", cfg);
  s["predictions"] = out;
  return s;
}

Summary cmd_evaluate(const PipelineConfig& cfg, const CommandOptions& opts) {
  const auto combos = selected_combinations(cfg, opts);
  for (const auto& c : combos) load_combination_checkpoint(cfg, c, opts.force);
  const LabeledScene scene = load_labeled_scene(cfg);
  const auto region = test_mask(scene);
  std::vector<evaluation::GridRow> rows;
  json out = json::array();
  for (const auto& c : combos) {
    const auto report = evaluate_stage(cfg, c, scene, region, opts.force);
    rows.push_back(evaluation::GridRow::from_report(c, report));
    out.push_back(report.to_json());
  }
  const auto grid = evaluation::assemble_grid(std::move(rows));
  const fs::path csv = cfg.output_root / "evaluation" / "report.csv";
  fs::create_directories(csv.parent_path());
  std::ofstream(csv) << grid.to_csv();
  Summary s = summary("evaluate", cfg);
  s["reports"] = out;
  return s;
}

Summary cmd_grid(const PipelineConfig& cfg, const CommandOptions& opts) {
  const Layout layout{cfg.output_root};
  const std::string hash = cfg.hash();
  const auto combos = selected_combinations(cfg, opts);
  const int workers = opts.workers.value_or(cfg.workers);
  json stages = json::object();

  if (!manifest_fresh(layout.labeled_dir(), hash)) {
    log(opts, "[grid] preparing labeled dataset");
    stages["prepare-labeled"] = prepare_labeled_stage(cfg);
  }
  std::set<std::string> names;
  std::set<int> ks;
  for (const auto& c : combos) {
    names.insert(c.dataset);
    if (c.k) ks.insert(*c.k);
  }
  std::vector<std::string> stale_names;
  for (const auto& n : names)
    if (!manifest_fresh(layout.augmented_dir(n), hash)) stale_names.push_back(n);
  if (!stale_names.empty()) stages["augment"] = augment_stage(cfg, stale_names);
  std::vector<int> stale_ks;
  for (int k : ks)
    if (!manifest_fresh(layout.cluster_dir(k), hash)) stale_ks.push_back(k);
  if (!stale_ks.empty()) stages["prepare-cluster"] = prepare_cluster_stage(cfg, stale_ks, opts);

  std::vector<int> pretrain_ks;
  for (int k : ks)
    if (!checkpoint_fresh(layout.pretrain_weights(k), hash)) pretrain_ks.push_back(k);
  const auto pretrain_errors = parallel_for(pretrain_ks.size(), workers,
                                            [&](std::size_t i) { pretrain_stage(cfg, pretrain_ks[i], opts); });
  json pretrain_failures = json::array();
  for (std::size_t i = 0; i < pretrain_ks.size(); ++i)
    if (pretrain_errors[i]) pretrain_failures.push_back({{"k", pretrain_ks[i]}, {"error", *pretrain_errors[i]}});

  std::map<std::string, std::vector<datasets::LabeledTile>> tiles;
  for (const auto& n : names) tiles[n] = train_area_tiles(layout.augmented_dir(n));
  std::vector<Combination> to_train;
  for (const auto& c : combos)
    if (!checkpoint_fresh(layout.final_weights(c), hash)) to_train.push_back(c);
  const auto train_errors = parallel_for(to_train.size(), workers, [&](std::size_t i) {
    train_stage(cfg, to_train[i], tiles.at(to_train[i].dataset), opts);
  });
  json train_failures = json::array();
  for (std::size_t i = 0; i < to_train.size(); ++i)
    if (train_errors[i]) train_failures.push_back({{"combination", to_train[i].label()}, {"error", *train_errors[i]}});
  tiles.clear();

  const LabeledScene scene = load_labeled_scene(cfg);
  const auto region = test_mask(scene);
  const auto report = evaluation::run_grid(
      combos, [&](const Combination& c) { return evaluate_stage(cfg, c, scene, region, false); }, workers);

  const fs::path dir = layout.grid_dir();
  fs::create_directories(dir);
  std::ofstream(dir / "grid_report.csv") << report.to_csv();
  json report_json = report.to_json();
  report_json["config_hash"] = hash;
  write_json(dir / "grid_report.json", report_json);
  const json comparison = evaluation::compare_frameworks(report);
  write_json(dir / "comparison.json", comparison);

  Summary s = summary("grid", cfg);
  s["rows"] = report.rows.size();
  s["failed"] = report.failed_count();
  s["trained"] = to_train.size() - train_failures.size();
  s["pretrained"] = pretrain_ks.size() - pretrain_failures.size();
  if (!pretrain_failures.empty()) s["pretrain_failures"] = pretrain_failures;
  if (!train_failures.empty()) s["train_failures"] = train_failures;
  s["report"] = (dir / "grid_report.csv").string();
  return s;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth",    "prepare-labeled", "prepare-cluster",
                                              "augment",  "pretrain",        "train",
                                              "predict",  "evaluate",        "grid"};
  return names;
}

Summary run_command(const std::string& name, const PipelineConfig& cfg, const CommandOptions& opts) {
  cfg.validate(opts.allow_any_k);
  if (name == "synth") return cmd_synth(cfg, opts);
  if (name == "prepare-labeled") return cmd_prepare_labeled(cfg, opts);
  if (name == "prepare-cluster") return cmd_prepare_cluster(cfg, opts);
  if (name == "augment") return cmd_augment(cfg, opts);
  if (name == "pretrain") return cmd_pretrain(cfg, opts);
  if (name == "train") return cmd_train(cfg, opts);
  if (name == "predict") return cmd_predict(cfg, opts);
  if (name == "evaluate") return cmd_evaluate(cfg, opts);
  if (name == "grid") return cmd_grid(cfg, opts);
  throw ConfigError("unknown command '" + name + "'");
}

std::string read_grid_csv(const PipelineConfig& cfg) {
  const fs::path path = Layout{cfg.output_root}.grid_dir() / "grid_report.csv";
  require_artifact(path, "grid report", "grid");
  std::ifstream f(path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace relict::app
