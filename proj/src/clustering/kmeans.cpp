#include "relict/clustering/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>

#include "relict/core/error.hpp"
#include "relict/core/rng.hpp"

namespace relict::clustering {

using json = nlohmann::json;

namespace {

double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

int nearest(const double* x, const std::vector<double>& centroids, int k, int d, double* dist_out) {
  int best = 0;
  double best_d = sq_dist(x, centroids.data(), d);
  for (int c = 1; c < k; ++c) {
    const double dd = sq_dist(x, centroids.data() + static_cast<std::size_t>(c) * d, d);
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

// k-means++: first centre uniform, then proportional to squared distance.
std::vector<double> seed_plus_plus(const std::vector<double>& x, std::size_t n, int d, int k, Rng& rng) {
  std::vector<double> centroids;
  centroids.reserve(static_cast<std::size_t>(k) * d);
  const std::size_t first = rng.below(n);
  centroids.insert(centroids.end(), x.begin() + first * d, x.begin() + (first + 1) * d);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(&x[i * d], centroids.data(), d);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : dist) total += v;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centroids.insert(centroids.end(), x.begin() + pick * d, x.begin() + (pick + 1) * d);
    const double* cnew = &centroids[static_cast<std::size_t>(c) * d];
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], sq_dist(&x[i * d], cnew, d));
  }
  return centroids;
}

}  // namespace

KMeansModel fit_kmeans(const PixelMatrix& pixels, const KMeansOptions& opt) {
  if (opt.k < 1) throw Error("k-means requires k >= 1");
  if (pixels.dims < 1) throw Error("k-means requires at least one band");
  if (pixels.rows() < static_cast<std::size_t>(opt.k))
    throw Error("k-means requires at least k pixels (have " + std::to_string(pixels.rows()) + ", k = " +
                std::to_string(opt.k) + ")");
  if (opt.max_iter < 1 || opt.tol < 0.0) throw Error("k-means requires max_iter >= 1 and tol >= 0");

  const int d = pixels.dims;
  Rng rng(opt.seed);

  std::vector<double> x;
  std::size_t n = pixels.rows();
  if (n > opt.max_samples) {
    const auto idx = rng.sample_indices(n, opt.max_samples);
    x.reserve(idx.size() * d);
    for (std::size_t i : idx) x.insert(x.end(), pixels.values.begin() + i * d, pixels.values.begin() + (i + 1) * d);
    n = idx.size();
  } else {
    x = pixels.values;
  }

  KMeansModel model;
  model.k = opt.k;
  model.dims = d;
  model.seed = opt.seed;
  model.standardized = opt.standardize;
  if (opt.standardize) {
    model.band_mean.assign(d, 0.0);
    model.band_scale.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) model.band_mean[j] += x[i * d + j];
    for (int j = 0; j < d; ++j) model.band_mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        const double t = x[i * d + j] - model.band_mean[j];
        model.band_scale[j] += t * t;
      }
    for (int j = 0; j < d; ++j) {
      const double s = std::sqrt(model.band_scale[j] / static_cast<double>(n));
      model.band_scale[j] = s > 0.0 ? s : 1.0;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) x[i * d + j] = (x[i * d + j] - model.band_mean[j]) / model.band_scale[j];
  }

  std::vector<double> centroids = seed_plus_plus(x, n, d, opt.k, rng);
  std::vector<int> labels(n);
  std::vector<double> dist(n);
  std::vector<double> sums(static_cast<std::size_t>(opt.k) * d);
  std::vector<std::size_t> counts(opt.k);

  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = nearest(&x[i * d], centroids, opt.k, d, &dist[i]);
      inertia += dist[i];
    }
    return inertia;
  };

  double inertia = assign_all();
  model.inertia_history.push_back(inertia);
  int iter = 0;
  while (iter < opt.max_iter) {
    ++iter;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[labels[i]] += 1;
      for (int j = 0; j < d; ++j) sums[static_cast<std::size_t>(labels[i]) * d + j] += x[i * d + j];
    }
    std::vector<double> updated(centroids.size());
    for (int c = 0; c < opt.k; ++c) {
      if (counts[c] == 0) {
        // relocate an empty cluster onto the worst-fitted point
        const std::size_t far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy(x.begin() + far * d, x.begin() + (far + 1) * d, updated.begin() + static_cast<std::size_t>(c) * d);
        dist[far] = 0.0;
        continue;
      }
      for (int j = 0; j < d; ++j)
        updated[static_cast<std::size_t>(c) * d + j] = sums[static_cast<std::size_t>(c) * d + j] / counts[c];
    }
    double shift = 0.0;
    for (int c = 0; c < opt.k; ++c)
      shift = std::max(shift, std::sqrt(sq_dist(&updated[static_cast<std::size_t>(c) * d],
                                                &centroids[static_cast<std::size_t>(c) * d], d)));
    centroids = std::move(updated);
    const double next = assign_all();
    if (next > inertia * (1.0 + 1e-12) + 1e-12)
      throw Error("k-means inertia increased from " + std::to_string(inertia) + " to " + std::to_string(next));
    inertia = next;
    model.inertia_history.push_back(inertia);
    if (shift < opt.tol) break;
  }

  model.iterations_run = iter;
  model.inertia = inertia;
  if (opt.standardize)
    for (int c = 0; c < opt.k; ++c)
      for (int j = 0; j < d; ++j) {
        double& v = centroids[static_cast<std::size_t>(c) * d + j];
        v = v * model.band_scale[j] + model.band_mean[j];
      }
  model.centroids = std::move(centroids);
  return model;
}

int assign_one(const KMeansModel& model, std::span<const double> pixel) {
  if (static_cast<int>(pixel.size()) != model.dims)
    throw Error("pixel has " + std::to_string(pixel.size()) + " bands; model expects " + std::to_string(model.dims));
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < model.k; ++c) {
    double s = 0.0;
    for (int j = 0; j < model.dims; ++j) {
      double t = pixel[j] - model.centroids[static_cast<std::size_t>(c) * model.dims + j];
      if (model.standardized) t /= model.band_scale[j];
      s += t * t;
    }
    if (s < best_d) {
      best_d = s;
      best = c;
    }
  }
  return best;
}

std::vector<int> assign(const KMeansModel& model, const PixelMatrix& pixels) {
  if (pixels.dims != model.dims)
    throw Error("pixel dimensionality " + std::to_string(pixels.dims) + " does not match model (" +
                std::to_string(model.dims) + ")");
  std::vector<int> labels(pixels.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = assign_one(model, pixels.row(i));
  return labels;
}

int predominant_label(std::span<const int> labels, std::span<const std::uint8_t> validity) {
  if (labels.size() != validity.size()) throw Error("label and validity sizes differ");
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (validity[i]) counts[labels[i]] += 1;
  if (counts.empty()) throw Error("predominant_label: tile has no valid pixels");
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts)
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  return best;
}

PixelMatrix collect_valid_pixels(std::span<const raster::MultibandRaster* const> rasters,
                                 std::size_t max_samples, std::uint64_t seed) {
  PixelMatrix m;
  if (rasters.empty()) return m;
  m.dims = rasters.front()->bands;
  for (const auto* r : rasters) {
    if (r->bands != m.dims) throw Error("cluster scenes disagree on band count");
    for (std::size_t i = 0; i < r->plane_size(); ++i) {
      if (r->nodata[i]) continue;
      for (int b = 0; b < r->bands; ++b) m.values.push_back(r->pixels[b * r->plane_size() + i]);
    }
  }
  if (m.rows() > max_samples) {
    Rng rng(seed);
    const auto idx = rng.sample_indices(m.rows(), max_samples);
    std::vector<double> kept;
    kept.reserve(idx.size() * m.dims);
    for (std::size_t i : idx) {
      auto row = m.row(i);
      kept.insert(kept.end(), row.begin(), row.end());
    }
    m.values = std::move(kept);
  }
  return m;
}

void save_model(const KMeansModel& model, const std::filesystem::path& path) {
  json j{{"k", model.k},
         {"dims", model.dims},
         {"seed", model.seed},
         {"inertia", model.inertia},
         {"iterations_run", model.iterations_run},
         {"standardized", model.standardized},
         {"centroids", json::array()}};
  for (int c = 0; c < model.k; ++c) {
    auto row = model.centroid(c);
    j["centroids"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  if (model.standardized) {
    j["band_mean"] = model.band_mean;
    j["band_scale"] = model.band_scale;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

KMeansModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open k-means model " + path.string());
  const json j = json::parse(in);
  KMeansModel m;
  m.k = j.at("k").get<int>();
  m.dims = j.at("dims").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.inertia = j.at("inertia").get<double>();
  m.iterations_run = j.at("iterations_run").get<int>();
  m.standardized = j.value("standardized", false);
  for (const auto& row : j.at("centroids"))
    for (double v : row) m.centroids.push_back(v);
  if (m.standardized) {
    m.band_mean = j.at("band_mean").get<std::vector<double>>();
    m.band_scale = j.at("band_scale").get<std::vector<double>>();
  }
  if (m.centroids.size() != static_cast<std::size_t>(m.k) * m.dims) throw Error("corrupt k-means model " + path.string());
  return m;
}

}  // namespace relict::clustering
