#include "relict/evaluation/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "relict/core/error.hpp"
#include "relict/raster/raster_io.hpp"

namespace relict::evaluation {

using json = nlohmann::json;

std::vector<std::uint8_t> binarize(const std::vector<double>& probabilities, double threshold) {
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probabilities[i] > threshold ? 1 : 0;
  return out;
}

PredictionRaster predict_scene(models::Network& model, const raster::MultibandRaster& scene, double threshold,
                               int tile_size, raster::PadMode pad_mode, int batch_size) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (model.spec().architecture == models::Architecture::classifier)
    throw Error("predict_scene needs a segmentation network");
  if (scene.bands != model.spec().encoder.input_channels)
    throw Error("scene has " + std::to_string(scene.bands) + " bands, model expects " +
                std::to_string(model.spec().encoder.input_channels));
  scene.validate();

  const raster::TileGrid grid = raster::make_tile_grid(scene, tile_size, pad_mode);
  PredictionRaster out;
  out.width = scene.width;
  out.height = scene.height;
  out.threshold = threshold;
  out.probabilities.assign(scene.plane_size(), 0.0);
  out.valid.assign(scene.plane_size(), 0);

  const std::size_t area = static_cast<std::size_t>(tile_size) * tile_size;
  const std::size_t per = area * scene.bands;
  for (std::size_t start = 0; start < grid.tiles.size(); start += batch_size) {
    const std::size_t end = std::min(grid.tiles.size(), start + static_cast<std::size_t>(batch_size));
    nn::Tensor x(nn::Shape{static_cast<int>(end - start), scene.bands, tile_size, tile_size});
    for (std::size_t i = start; i < end; ++i)
      std::memcpy(x.data() + (i - start) * per, grid.tiles[i].pixels.data(), per * sizeof(double));
    const nn::Tensor prob = model.predict(x);
    for (std::size_t i = start; i < end; ++i) {
      const auto& t = grid.tiles[i];
      const double* p = prob.data() + (i - start) * area;
      for (int y = 0; y < t.window.h; ++y)
        for (int xx = 0; xx < t.window.w; ++xx) {
          const std::size_t dst = static_cast<std::size_t>(t.window.y0 + y) * scene.width + t.window.x0 + xx;
          if (!t.valid(y, xx)) continue;
          out.probabilities[dst] = p[static_cast<std::size_t>(y) * tile_size + xx];
          out.valid[dst] = 1;
        }
    }
  }
  out.binary = binarize(out.probabilities, threshold);
  return out;
}

PredictionRaster predict_scene(const models::Checkpoint& ckpt, const raster::MultibandRaster& scene,
                               double threshold, int tile_size, raster::PadMode pad_mode,
                               const models::ModelSpec* expected) {
  auto net = models::instantiate(ckpt, expected);
  PredictionRaster out = predict_scene(*net, scene, threshold, tile_size, pad_mode);
  out.provenance = ckpt.provenance;
  return out;
}

json EvalReport::to_json() const {
  return {{"combination", combination},
          {"TP", tp},
          {"FP", fp},
          {"FN", fn},
          {"TN", tn},
          {"evaluated", evaluated},
          {"precision", precision},
          {"recall", recall},
          {"precision_defined", precision_defined},
          {"recall_defined", recall_defined}};
}

EvalReport confusion(std::span<const std::uint8_t> predicted, const raster::MaskRaster& truth,
                     std::span<const std::uint8_t> valid) {
  truth.validate();
  const std::size_t n = truth.values.size();
  if (predicted.size() != n) throw Error("prediction and truth differ in size");
  if (!valid.empty() && valid.size() != n) throw Error("validity mask and truth differ in size");
  EvalReport r;
  r.width = truth.width;
  r.height = truth.height;
  r.outcome_map.assign(n, Outcome::excluded);
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const bool p = predicted[i] != 0, t = truth.values[i] != 0;
    Outcome o = p ? (t ? Outcome::tp : Outcome::fp) : (t ? Outcome::fn : Outcome::tn);
    r.outcome_map[i] = o;
    switch (o) {
      case Outcome::tp: ++r.tp; break;
      case Outcome::fp: ++r.fp; break;
      case Outcome::fn: ++r.fn; break;
      default: ++r.tn; break;
    }
  }
  r.evaluated = r.tp + r.fp + r.fn + r.tn;
  r.precision_defined = r.tp + r.fp > 0;
  r.recall_defined = r.tp + r.fn > 0;
  if (r.precision_defined) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.recall_defined) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  return r;
}

EvalReport confusion(const PredictionRaster& pred, const raster::MaskRaster& truth,
                     std::span<const std::uint8_t> valid) {
  if (pred.width != truth.width || pred.height != truth.height)
    throw Error("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) + ", truth is " +
                std::to_string(truth.width) + "x" + std::to_string(truth.height));
  std::vector<std::uint8_t> combined = pred.valid;
  if (!valid.empty()) {
    if (valid.size() != combined.size()) throw Error("validity mask and prediction differ in size");
    for (std::size_t i = 0; i < combined.size(); ++i) combined[i] = combined[i] && valid[i];
  }
  return confusion(pred.binary, truth, combined);
}

const std::vector<OutcomeColor>& outcome_palette() {
  static const std::vector<OutcomeColor> palette{
      {Outcome::excluded, 0, 0, 0, "excluded"},
      {Outcome::tn, 230, 230, 230, "TN"},
      {Outcome::tp, 20, 160, 60, "TP"},
      {Outcome::fp, 220, 40, 40, "FP"},
      {Outcome::fn, 40, 90, 220, "FN"},
  };
  return palette;
}

void render_outcome_map(const EvalReport& report, const std::filesystem::path& path,
                        const std::optional<raster::GeoTransform>& georef) {
  const std::size_t n = static_cast<std::size_t>(report.width) * report.height;
  if (report.outcome_map.size() != n || n == 0) throw Error("report has no outcome map");
  auto img = raster::MultibandRaster::zeros(report.width, report.height, 3);
  img.band_names = {"red", "green", "blue"};
  img.georef = georef;
  img.nodata_value = 0.0;
  const auto& palette = outcome_palette();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = palette[static_cast<std::size_t>(report.outcome_map[i])];
    img.pixels[i] = c.r;
    img.pixels[n + i] = c.g;
    img.pixels[2 * n + i] = c.b;
    img.nodata[i] = report.outcome_map[i] == Outcome::excluded;
  }
  raster::save_raster(img, path, raster::SampleType::uint8);

  json legend = json::array();
  for (const auto& c : palette) legend.push_back({{"outcome", c.name}, {"rgb", {c.r, c.g, c.b}}});
  std::ofstream f(path.string() + ".legend.json");
  if (!f) throw Error("cannot write legend next to " + path.string());
  f << json{{"legend", legend}, {"counts", report.to_json()}}.dump(2) << "\n";
}

// ---- grid ----------------------------------------------------------------

GridRow GridRow::from_report(const training::Combination& c, const EvalReport& r) {
  GridRow row;
  row.combination = c;
  row.tp = r.tp;
  row.fp = r.fp;
  row.fn = r.fn;
  row.precision = r.precision;
  row.recall = r.recall;
  row.precision_defined = r.precision_defined;
  row.recall_defined = r.recall_defined;
  return row;
}

GridRow GridRow::failure(const training::Combination& c, std::string error) {
  GridRow row;
  row.combination = c;
  row.failed = true;
  row.error = std::move(error);
  return row;
}

std::string GridRow::flags() const {
  std::vector<std::string> f;
  if (failed) f.push_back("failed");
  if (best_precision) f.push_back("best_precision");
  if (best_recall) f.push_back("best_recall");
  if (!failed && !precision_defined) f.push_back("precision_undefined");
  if (!failed && !recall_defined) f.push_back("recall_undefined");
  std::string s;
  for (std::size_t i = 0; i < f.size(); ++i) s += (i ? ";" : "") + f[i];
  return s;
}

std::size_t GridReport::failed_count() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const GridRow& r) { return r.failed; }));
}

std::string GridReport::to_csv() const {
  std::ostringstream out;
  out << "framework,arch,k,dataset,TP,FP,FN,precision,recall,flags\n";
  char buf[64];
  for (const auto& r : rows) {
    const auto& c = r.combination;
    out << training::to_string(c.framework) << ',' << models::to_string(c.arch) << ','
        << (c.k ? std::to_string(*c.k) : "") << ',' << c.dataset << ',';
    if (r.failed) {
      out << ",,,,," << r.flags() << '\n';
      continue;
    }
    out << r.tp << ',' << r.fp << ',' << r.fn << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.precision, r.recall);
    out << buf << ',' << r.flags() << '\n';
  }
  return out.str();
}

json GridReport::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    json j{{"framework", training::to_string(r.combination.framework)},
           {"arch", models::to_string(r.combination.arch)},
           {"k", r.combination.k ? json(*r.combination.k) : json(nullptr)},
           {"dataset", r.combination.dataset},
           {"flags", r.flags()}};
    if (r.failed) {
      j["error"] = r.error;
    } else {
      j["TP"] = r.tp;
      j["FP"] = r.fp;
      j["FN"] = r.fn;
      j["precision"] = r.precision;
      j["recall"] = r.recall;
    }
    rs.push_back(std::move(j));
  }
  return {{"rows", rs}, {"row_count", rows.size()}, {"failed", failed_count()}};
}

GridReport assemble_grid(std::vector<GridRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    return training::combination_less(a.combination, b.combination);
  });
  std::map<std::pair<int, int>, std::pair<double, double>> best;
  for (const auto& r : rows) {
    if (r.failed) continue;
    auto key = std::make_pair(static_cast<int>(r.combination.framework), static_cast<int>(r.combination.arch));
    auto [it, inserted] = best.try_emplace(key, r.precision, r.recall);
    if (!inserted) {
      it->second.first = std::max(it->second.first, r.precision);
      it->second.second = std::max(it->second.second, r.recall);
    }
  }
  for (auto& r : rows) {
    if (r.failed) continue;
    const auto& b = best.at({static_cast<int>(r.combination.framework), static_cast<int>(r.combination.arch)});
    r.best_precision = r.precision == b.first;
    r.best_recall = r.recall == b.second;
  }
  return GridReport{std::move(rows)};
}

GridReport run_grid(const std::vector<training::Combination>& combinations,
                    const std::function<EvalReport(const training::Combination&)>& evaluate, int workers) {
  std::vector<GridRow> rows(combinations.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < combinations.size(); i = next++) {
      try {
        rows[i] = GridRow::from_report(combinations[i], evaluate(combinations[i]));
      } catch (const std::exception& e) {
        rows[i] = GridRow::failure(combinations[i], e.what());
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(combinations.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return assemble_grid(std::move(rows));
}

json compare_frameworks(const GridReport& report) {
  struct Acc {
    std::optional<GridRow> standard;
    std::vector<const GridRow*> proposed;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : report.rows) {
    if (r.failed) continue;
    auto& g = groups[{models::to_string(r.combination.arch), r.combination.dataset}];
    if (r.combination.framework == training::Framework::standard) g.standard = r;
    else g.proposed.push_back(&r);
  }
  json out = json::array();
  for (const auto& [key, g] : groups) {
    json j{{"arch", key.first}, {"dataset", key.second}};
    if (g.standard) j["standard"] = {{"precision", g.standard->precision}, {"recall", g.standard->recall}};
    if (!g.proposed.empty()) {
      double mp = 0, mr = 0, bp = 0, br = 0;
      for (const auto* r : g.proposed) {
        mp += r->precision;
        mr += r->recall;
        bp = std::max(bp, r->precision);
        br = std::max(br, r->recall);
      }
      mp /= g.proposed.size();
      mr /= g.proposed.size();
      j["proposed_mean"] = {{"precision", mp}, {"recall", mr}};
      j["proposed_best"] = {{"precision", bp}, {"recall", br}};
      if (g.standard) {
        j["proposed_best_beats_standard_precision"] = bp > g.standard->precision;
        j["proposed_best_beats_standard_recall"] = br > g.standard->recall;
      }
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace relict::evaluation
