#include "relict/app/config.hpp"

#include <cstdlib>
#include <fstream>

#include "relict/core/error.hpp"
#include "relict/core/hash.hpp"

namespace relict::app {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json optional_path(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

std::optional<fs::path> read_optional_path(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return fs::path(j[key].get<std::string>());
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : (base / p).lexically_normal(); }

const std::vector<std::string> kKnownKeys{
    "output_root", "labeled_scene", "labels",       "void_regions", "cluster_scenes", "tile_size",
    "pad_mode",    "split_ratio",   "k_values",     "augmentation", "frameworks",     "architectures",
    "encoder",     "input_scale",   "kmeans",       "pretrain",     "finetune",       "threshold",
    "seeds",       "workers",       "synthetic"};

}  // namespace

models::EncoderSpec PipelineConfig::encoder() const {
  if (encoder_preset == "full") return models::EncoderSpec::full();
  if (encoder_preset == "tiny") return models::EncoderSpec::tiny();
  throw ConfigError("unknown encoder preset '" + encoder_preset + "' (expected full or tiny)");
}

void PipelineConfig::validate(bool allow_any_k) const {
  if (tile_size < 32 || tile_size % 32 != 0) throw ConfigError("tile_size must be a positive multiple of 32");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(input_scale > 0.0)) throw ConfigError("input_scale must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (kmeans.max_iter < 1 || !(kmeans.tol >= 0.0) || kmeans.max_samples < 1) throw ConfigError("invalid kmeans block");
  (void)encoder();
  for (int k : k_values)
    training::Combination{training::Framework::proposed, models::Architecture::unet, k, "LD"}.validate(allow_any_k);
  for (const auto& [name, factor] : augmentation) {
    if (name.empty()) throw ConfigError("augmentation dataset names must be non-empty");
    if (factor < 1) throw ConfigError("augmentation factor for " + name + " must be >= 1");
  }
  if (augmentation.empty()) throw ConfigError("at least one augmentation dataset is required");
  if (frameworks.empty() || architectures.empty()) throw ConfigError("frameworks and architectures must be non-empty");
  for (auto a : architectures)
    if (a == models::Architecture::classifier) throw ConfigError("classifier is not a segmentation architecture");
  pretrain.validate();
  finetune.validate();
  if (synthetic) {
    synthetic->spec.validate();
    if (synthetic->scene_count < 1) throw ConfigError("synthetic.scene_count must be >= 1");
  } else {
    if (!labeled_scene) throw ConfigError("labeled_scene is required without a synthetic block");
    if (!labels) throw ConfigError("labels is required without a synthetic block");
  }
}

json PipelineConfig::to_json() const {
  json scenes = json::array();
  for (const auto& p : cluster_scenes) scenes.push_back(p.generic_string());
  json fw = json::array(), archs = json::array();
  for (auto f : frameworks) fw.push_back(training::to_string(f));
  for (auto a : architectures) archs.push_back(models::to_string(a));
  json j{{"output_root", output_root.generic_string()},
         {"labeled_scene", optional_path(labeled_scene)},
         {"labels", optional_path(labels)},
         {"void_regions", optional_path(void_regions)},
         {"cluster_scenes", scenes},
         {"tile_size", tile_size},
         {"pad_mode", raster::to_string(pad_mode)},
         {"split_ratio", split_ratio},
         {"k_values", k_values},
         {"augmentation", augmentation},
         {"frameworks", fw},
         {"architectures", archs},
         {"encoder", encoder_preset},
         {"input_scale", input_scale},
         {"kmeans",
          {{"max_iter", kmeans.max_iter},
           {"tol", kmeans.tol},
           {"standardize", kmeans.standardize},
           {"max_samples", kmeans.max_samples},
           {"drop_classes_below", kmeans.drop_classes_below}}},
         {"pretrain", pretrain.to_json()},
         {"finetune", finetune.to_json()},
         {"threshold", threshold},
         {"seeds",
          {{"kmeans", seeds.kmeans}, {"balance", seeds.balance}, {"augment", seeds.augment}, {"model", seeds.model}}},
         {"workers", workers}};
  if (synthetic) {
    json s = synthetic->spec.to_json();
    s["scene_count"] = synthetic->scene_count;
    j["synthetic"] = s;
  } else {
    j["synthetic"] = nullptr;
  }
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
      throw ConfigError("unknown config key '" + key + "'");
  PipelineConfig c;
  try {
    c.output_root = j.value("output_root", c.output_root.generic_string());
    c.labeled_scene = read_optional_path(j, "labeled_scene");
    c.labels = read_optional_path(j, "labels");
    c.void_regions = read_optional_path(j, "void_regions");
    if (j.contains("cluster_scenes"))
      for (const auto& p : j["cluster_scenes"]) c.cluster_scenes.emplace_back(p.get<std::string>());
    c.tile_size = j.value("tile_size", c.tile_size);
    c.pad_mode = raster::pad_mode_from_string(j.value("pad_mode", raster::to_string(c.pad_mode)));
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    if (j.contains("k_values")) c.k_values = j["k_values"].get<std::vector<int>>();
    if (j.contains("augmentation")) c.augmentation = j["augmentation"].get<std::map<std::string, int>>();
    if (j.contains("frameworks")) {
      c.frameworks.clear();
      for (const auto& f : j["frameworks"]) c.frameworks.push_back(training::framework_from_string(f));
    }
    if (j.contains("architectures")) {
      c.architectures.clear();
      for (const auto& a : j["architectures"]) c.architectures.push_back(models::architecture_from_string(a));
    }
    c.encoder_preset = j.value("encoder", c.encoder_preset);
    c.input_scale = j.value("input_scale", c.input_scale);
    if (j.contains("kmeans")) {
      const auto& k = j["kmeans"];
      c.kmeans.max_iter = k.value("max_iter", c.kmeans.max_iter);
      c.kmeans.tol = k.value("tol", c.kmeans.tol);
      c.kmeans.standardize = k.value("standardize", c.kmeans.standardize);
      c.kmeans.max_samples = k.value("max_samples", c.kmeans.max_samples);
      c.kmeans.drop_classes_below = k.value("drop_classes_below", c.kmeans.drop_classes_below);
    }
    if (j.contains("pretrain")) c.pretrain = training::TrainConfig::from_json(j["pretrain"]);
    if (j.contains("finetune")) c.finetune = training::TrainConfig::from_json(j["finetune"]);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.seeds.kmeans = s.value("kmeans", c.seeds.kmeans);
      c.seeds.balance = s.value("balance", c.seeds.balance);
      c.seeds.augment = s.value("augment", c.seeds.augment);
      c.seeds.model = s.value("model", c.seeds.model);
    }
    c.workers = j.value("workers", c.workers);
    if (j.contains("synthetic") && !j["synthetic"].is_null()) {
      SyntheticSettings s;
      s.spec = synthetic::SceneSpec::from_json(j["synthetic"]);
      s.scene_count = j["synthetic"].value("scene_count", 1);
      c.synthetic = s;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("output_root");
  j.erase("workers");
  return to_hex(fnv1a(j.dump()));
}

fs::path PipelineConfig::synthetic_scene_path(int index) const {
  return output_root / "synth" / ("scene_" + std::to_string(index) + ".tif");
}
fs::path PipelineConfig::synthetic_mask_path() const { return output_root / "synth" / "truth_mask.tif"; }
fs::path PipelineConfig::synthetic_confounder_path() const { return output_root / "synth" / "confounders.tif"; }

fs::path PipelineConfig::labeled_scene_path() const {
  if (labeled_scene) return *labeled_scene;
  if (synthetic) return synthetic_scene_path(0);
  throw ConfigError("labeled_scene is not configured");
}

fs::path PipelineConfig::labels_path() const {
  if (labels) return *labels;
  if (synthetic) return synthetic_mask_path();
  throw ConfigError("labels is not configured");
}

std::vector<fs::path> PipelineConfig::cluster_scene_paths() const {
  if (!cluster_scenes.empty()) return cluster_scenes;
  if (synthetic && !labeled_scene) {
    std::vector<fs::path> out;
    for (int i = 0; i < synthetic->scene_count; ++i) out.push_back(synthetic_scene_path(i));
    return out;
  }
  return {labeled_scene_path()};
}

PipelineConfig load_config(const fs::path& path, bool use_env) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  PipelineConfig c = PipelineConfig::from_json(j);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  c.output_root = resolve(base, c.output_root);
  if (c.labeled_scene) c.labeled_scene = resolve(base, *c.labeled_scene);
  if (c.labels) c.labels = resolve(base, *c.labels);
  if (c.void_regions) c.void_regions = resolve(base, *c.void_regions);
  for (auto& p : c.cluster_scenes) p = resolve(base, p);
  if (use_env)
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) c.output_root = env;
  return c;
}

}  // namespace relict::app
