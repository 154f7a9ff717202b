#include "relict/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include "relict/core/error.hpp"
#include "relict/core/hash.hpp"
#include "relict/core/rng.hpp"
#include "relict/nn/ops.hpp"

namespace relict::training {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
std::string loss_name(LossKind k) { return k == LossKind::pixel_bce ? "pixel_bce" : "categorical_ce"; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Seeded epoch order split into batches; a trailing single-tile batch is
// merged into its predecessor so batch statistics stay defined.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

nn::Tensor stack_pixels(const std::vector<const raster::Tile*>& tiles) {
  const auto& first = *tiles.front();
  const std::size_t per = first.pixels.size();
  nn::Tensor x(nn::Shape{static_cast<int>(tiles.size()), first.bands, first.tile_size, first.tile_size});
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (tiles[i]->pixels.size() != per) throw Error("tiles in a batch differ in shape");
    std::memcpy(x.data() + i * per, tiles[i]->pixels.data(), per * sizeof(double));
  }
  return x;
}

void check_finite(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
}

std::vector<nn::Var> trainable(models::Network& net) {
  std::vector<nn::Var> out;
  for (const auto& [name, v] : net.parameters().parameters()) out.push_back(v);
  return out;
}

void maybe_checkpoint(const TrainConfig& c, int epoch, const models::Network& net, const CheckpointSink& sink) {
  if (!sink) return;
  if (epoch == c.epochs || (c.checkpoint_every > 0 && epoch % c.checkpoint_every == 0)) sink(epoch, net);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (device == Device::accelerator) throw ConfigError("no accelerator backend is built; use device \"cpu\"");
}

json TrainConfig::to_json() const {
  json j{{"learning_rate", learning_rate},
         {"epochs", epochs},
         {"batch_size", batch_size},
         {"seed", seed},
         {"optimizer", optimizer_name(optimizer)},
         {"device", device == Device::cpu ? "cpu" : "accelerator"},
         {"checkpoint_every", checkpoint_every}};
  j["loss"] = loss ? json(loss_name(*loss)) : json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") c.optimizer = OptimizerKind::adam;
  else if (opt == "sgd") c.optimizer = OptimizerKind::sgd;
  else throw ConfigError("unknown optimizer '" + opt + "'");
  const std::string dev = j.value("device", std::string("cpu"));
  if (dev == "cpu") c.device = Device::cpu;
  else if (dev == "accelerator") c.device = Device::accelerator;
  else throw ConfigError("unknown device '" + dev + "'");
  if (j.contains("loss") && !j["loss"].is_null()) {
    const std::string l = j["loss"].get<std::string>();
    if (l == "pixel_bce") c.loss = LossKind::pixel_bce;
    else if (l == "categorical_ce") c.loss = LossKind::categorical_ce;
    else throw ConfigError("unknown loss '" + l + "'");
  }
  return c;
}

bool TrainRecord::same_trajectory(const TrainRecord& o) const {
  if (epochs.size() != o.epochs.size() || final_checksum != o.final_checksum) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (epochs[i].loss != o.epochs[i].loss || epochs[i].accuracy != o.epochs[i].accuracy) return false;
  return true;
}

json TrainRecord::to_json() const {
  json e = json::array();
  for (const auto& s : epochs) e.push_back({{"epoch", s.epoch}, {"loss", s.loss}, {"accuracy", s.accuracy}});
  return {{"epochs", e}, {"final_checksum", final_checksum}};
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::vector<nn::Var> params)
    : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
  if (kind_ == OptimizerKind::adam)
    for (const auto& p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
}

void Optimizer::step() {
  ++t_;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-7;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.numel() != p.value.numel()) continue;  // no gradient reached this parameter
    double* w = p.value.data();
    const double* g = p.grad.data();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < p.value.numel(); ++j) w[j] -= lr_ * g[j];
      continue;
    }
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      m[j] = b1 * m[j] + (1 - b1) * g[j];
      v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

TrainRecord pretrain(models::Network& classifier, const std::vector<datasets::ClusterTile>& tiles,
                     const TrainConfig& config, const CheckpointSink& sink) {
  config.validate();
  if (config.loss && *config.loss != LossKind::categorical_ce)
    throw ConfigError("pre-training uses categorical cross-entropy");
  if (tiles.empty()) throw Error("pre-training dataset is empty");
  const int k = classifier.spec().output_classes;
  if (classifier.spec().architecture != models::Architecture::classifier) throw Error("pretrain needs a classifier");
  for (const auto& t : tiles)
    if (t.cluster_label < 0 || t.cluster_label >= k)
      throw Error("cluster label " + std::to_string(t.cluster_label) + " outside [0, " + std::to_string(k) + ")");

  Rng rng(config.seed);
  Optimizer opt(config.optimizer, config.learning_rate, trainable(classifier));
  TrainRecord record;
  const auto start = Clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batches = make_batches(tiles.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const raster::Tile*> batch_tiles;
      std::vector<int> labels;
      for (std::size_t i : batches[b]) {
        batch_tiles.push_back(&tiles[i].tile);
        labels.push_back(tiles[i].cluster_label);
      }
      classifier.parameters().zero_grad();
      const nn::Var logits = classifier.forward(stack_pixels(batch_tiles), true);
      const nn::Var loss = nn::softmax_cross_entropy(logits, labels);
      check_finite(loss->value.data()[0], epoch, b);
      nn::backward(loss);
      opt.step();
      loss_sum += loss->value.data()[0] * static_cast<double>(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* z = logits->value.data() + i * k;
        if (std::max_element(z, z + k) - z == labels[i]) ++correct;
      }
    }
    record.epochs.push_back({epoch, loss_sum / tiles.size(), static_cast<double>(correct) / tiles.size(),
                             seconds_since(t0)});
    maybe_checkpoint(config, epoch, classifier, sink);
  }
  record.wall_seconds = seconds_since(start);
  record.final_checksum = to_hex(classifier.snapshot().checksum());
  return record;
}

TrainRecord train_segmenter(models::Network& model, const std::vector<datasets::LabeledTile>& tiles,
                            const TrainConfig& config, const CheckpointSink& sink) {
  config.validate();
  if (config.loss && *config.loss != LossKind::pixel_bce)
    throw ConfigError("segmentation training uses per-pixel binary cross-entropy");
  if (tiles.empty()) throw Error("segmentation training dataset is empty");
  if (model.spec().architecture == models::Architecture::classifier)
    throw Error("train_segmenter needs a segmentation network");

  Rng rng(config.seed);
  Optimizer opt(config.optimizer, config.learning_rate, trainable(model));
  TrainRecord record;
  const auto start = Clock::now();
  const int s = tiles.front().tile.tile_size;
  const std::size_t area = static_cast<std::size_t>(s) * s;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    double loss_sum = 0.0;
    double weight_sum = 0.0;
    std::size_t correct = 0, counted = 0;
    const auto batches = make_batches(tiles.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const int n = static_cast<int>(batches[b].size());
      std::vector<const raster::Tile*> batch_tiles;
      nn::Tensor target(nn::Shape{n, 1, s, s});
      nn::Tensor weight(nn::Shape{n, 1, s, s});
      for (int i = 0; i < n; ++i) {
        const auto& t = tiles[batches[b][i]];
        if (t.target_mask.size() != area) throw Error("labeled tile without a target mask");
        batch_tiles.push_back(&t.tile);
        for (std::size_t p = 0; p < area; ++p) {
          target.data()[i * area + p] = t.target_mask[p];
          weight.data()[i * area + p] = t.tile.validity[p] ? 1.0 : 0.0;
        }
      }
      model.parameters().zero_grad();
      const nn::Var logits = model.forward(stack_pixels(batch_tiles), true);
      const nn::Var loss = nn::bce_with_logits(logits, target, weight);
      check_finite(loss->value.data()[0], epoch, b);
      nn::backward(loss);
      opt.step();
      double wsum = 0.0;
      for (std::size_t p = 0; p < weight.numel(); ++p) {
        if (weight.data()[p] == 0.0) continue;
        wsum += 1.0;
        const bool predicted = logits->value.data()[p] > 0.0;
        if (predicted == (target.data()[p] > 0.5)) ++correct;
        ++counted;
      }
      loss_sum += loss->value.data()[0] * wsum;
      weight_sum += wsum;
    }
    record.epochs.push_back({epoch, weight_sum > 0 ? loss_sum / weight_sum : 0.0,
                             counted ? static_cast<double>(correct) / counted : 0.0, seconds_since(t0)});
    maybe_checkpoint(config, epoch, model, sink);
  }
  record.wall_seconds = seconds_since(start);
  record.final_checksum = to_hex(model.snapshot().checksum());
  return record;
}

double pixel_accuracy(models::Network& model, const std::vector<datasets::LabeledTile>& tiles, int batch_size) {
  std::size_t correct = 0, counted = 0;
  for (std::size_t start = 0; start < tiles.size(); start += batch_size) {
    std::vector<const raster::Tile*> batch;
    const std::size_t end = std::min(tiles.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) batch.push_back(&tiles[i].tile);
    const nn::Tensor prob = model.predict(stack_pixels(batch));
    const std::size_t area = tiles[start].target_mask.size();
    for (std::size_t i = start; i < end; ++i)
      for (std::size_t p = 0; p < area; ++p) {
        if (!tiles[i].tile.validity[p]) continue;
        const bool predicted = prob.data()[(i - start) * area + p] > 0.5;
        if (predicted == (tiles[i].target_mask[p] != 0)) ++correct;
        ++counted;
      }
  }
  return counted ? static_cast<double>(correct) / counted : 0.0;
}

// ---- framework composition ----------------------------------------------

std::string to_string(Framework f) { return f == Framework::standard ? "standard" : "proposed"; }

Framework framework_from_string(const std::string& s) {
  if (s == "standard") return Framework::standard;
  if (s == "proposed") return Framework::proposed;
  throw ConfigError("unknown framework '" + s + "' (expected standard or proposed)");
}

fs::path Combination::relative_dir() const {
  return fs::path(to_string(framework)) / models::to_string(arch) / (k ? "k" + std::to_string(*k) : "kna") / dataset;
}

std::string Combination::label() const {
  return to_string(framework) + "/" + models::to_string(arch) + "/" + (k ? std::to_string(*k) : "-") + "/" + dataset;
}

void Combination::validate(bool allow_any_k) const {
  if (arch == models::Architecture::classifier) throw ConfigError("combinations need a segmentation architecture");
  if (framework == Framework::standard && k)
    throw ConfigError("the standard framework takes no cluster count (got k=" + std::to_string(*k) + ")");
  if (framework == Framework::proposed) {
    if (!k) throw ConfigError("the proposed framework requires a cluster count k");
    const bool listed = std::find(kSweepClusterCounts.begin(), kSweepClusterCounts.end(), *k) != kSweepClusterCounts.end();
    if (*k < 2 || (!allow_any_k && !listed))
      throw ConfigError("cluster count k=" + std::to_string(*k) + " is not one of 2, 4, 6, 8, 10, 12");
  }
  if (dataset.empty()) throw ConfigError("combination needs a dataset name");
}

bool combination_less(const Combination& a, const Combination& b) {
  auto key = [](const Combination& c) {
    return std::make_tuple(static_cast<int>(c.framework), static_cast<int>(c.arch), c.k.value_or(0), c.dataset);
  };
  return key(a) < key(b);
}

std::vector<Combination> enumerate_combinations(const std::vector<Framework>& frameworks,
                                                const std::vector<models::Architecture>& archs,
                                                const std::vector<int>& ks, const std::vector<std::string>& datasets) {
  std::vector<Combination> out;
  for (Framework f : frameworks)
    for (auto a : archs)
      for (const auto& d : datasets) {
        if (f == Framework::standard) {
          out.push_back({f, a, std::nullopt, d});
        } else {
          for (int k : ks) out.push_back({f, a, k, d});
        }
      }
  std::sort(out.begin(), out.end(), combination_less);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

fs::path epoch_checkpoint_path(const fs::path& dir, int epoch) {
  return dir / ("epoch_" + std::to_string(epoch)) / "weights.ckpt";
}

CheckpointSink directory_sink(const fs::path& dir, json provenance) {
  return [dir, provenance = std::move(provenance)](int epoch, const models::Network& net) {
    json p = provenance;
    p["epoch"] = epoch;
    models::save_checkpoint(models::make_checkpoint(net, p), epoch_checkpoint_path(dir, epoch));
  };
}

models::ParameterStore run_pretrain(int k, const std::vector<datasets::ClusterTile>& tiles,
                                    const models::EncoderSpec& encoder, double input_scale, std::uint64_t model_seed,
                                    const TrainConfig& config, TrainRecord* record, const CheckpointSink& sink) {
  auto classifier = models::build_classifier(encoder, k, model_seed, input_scale);
  TrainRecord r = pretrain(*classifier, tiles, config, sink);
  if (record) *record = std::move(r);
  return classifier->snapshot();
}

FrameworkResult run_framework(const Combination& combo, const FrameworkInputs& in) {
  combo.validate(in.allow_any_k);
  if (!in.train_tiles || in.train_tiles->empty()) throw Error("run_framework: no training tiles");

  FrameworkResult result;
  models::ModelSpec spec = models::ModelSpec::segmenter(combo.arch, in.encoder);
  spec.input_scale = in.input_scale;
  auto model = models::build_segmenter(spec, in.model_seed);

  json provenance = in.provenance;
  provenance["framework"] = to_string(combo.framework);
  provenance["arch"] = models::to_string(combo.arch);
  provenance["k"] = combo.k ? json(*combo.k) : json(nullptr);
  provenance["dataset"] = combo.dataset;
  provenance["model_seed"] = in.model_seed;
  provenance["finetune"] = in.finetune.to_json();

  if (combo.framework == Framework::proposed) {
    models::ParameterStore pretrained;
    if (in.pretrained) {
      pretrained = *in.pretrained;
    } else {
      if (!in.cluster_tiles) throw Error("proposed framework needs cluster tiles or a pre-trained store");
      TrainRecord pr;
      pretrained = run_pretrain(*combo.k, *in.cluster_tiles, in.encoder, in.input_scale, in.model_seed, in.pretrain, &pr);
      result.pretrain_record = std::move(pr);
    }
    models::transfer_encoder(pretrained, *model);
    provenance["pretrain"] = in.pretrain.to_json();
    provenance["pretrained_encoder_checksum"] = to_hex(pretrained.checksum("encoder."));
  }
  result.initial_encoder_checksum = model->snapshot().checksum("encoder.");

  CheckpointSink sink;
  if (in.checkpoint_root) sink = directory_sink(*in.checkpoint_root / combo.relative_dir(), provenance);
  result.record = train_segmenter(*model, *in.train_tiles, in.finetune, sink);
  result.checkpoint = models::make_checkpoint(*model, provenance);
  return result;
}

}  // namespace relict::training
