#include "relict/datasets/shards.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "relict/core/error.hpp"

namespace relict::datasets {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'L', 'S', 'H', 'A', 'R', 'D', '1'};

class Writer {
 public:
  explicit Writer(const fs::path& p) : out_(p, std::ios::binary) {
    if (!out_) throw Error("cannot write shard " + p.string());
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  void put_array(const std::vector<T>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish(const fs::path& p) {
    out_.flush();
    if (!out_) throw Error("failed writing shard " + p.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& p) : in_(p, std::ios::binary), path_(p) {
    if (!in_) throw Error("cannot open shard " + p.string());
  }
  template <typename T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  template <typename T>
  void get_array(std::vector<T>& v, std::size_t n) {
    v.resize(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    check();
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() {
    if (!in_) throw Error("truncated shard " + path_.string());
  }
  std::ifstream in_;
  fs::path path_;
};

struct Record {
  const raster::Tile* tile;
  std::int32_t label;
  std::int32_t scene;
  std::uint8_t area;
  std::uint8_t variant;
  const std::vector<std::uint8_t>* mask;
};

void write_record(Writer& w, const Record& r, bool with_mask) {
  const auto& t = *r.tile;
  w.put<std::int32_t>(r.scene);
  w.put<std::int32_t>(t.grid_row);
  w.put<std::int32_t>(t.grid_col);
  w.put<std::int32_t>(t.window.x0);
  w.put<std::int32_t>(t.window.y0);
  w.put<std::int32_t>(t.window.w);
  w.put<std::int32_t>(t.window.h);
  w.put<std::uint8_t>(t.padded ? 1 : 0);
  w.put<std::uint8_t>(r.area);
  w.put<std::uint8_t>(r.variant);
  w.put<std::uint8_t>(0);
  w.put<std::int32_t>(r.label);
  w.put_array(t.pixels);
  w.put_array(t.validity);
  if (with_mask) w.put_array(*r.mask);
}

struct Header {
  std::int32_t tile_size;
  std::int32_t bands;
  std::uint8_t kind;
  std::uint64_t count;
};

void write_header(Writer& w, const Header& h) {
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::int32_t>(h.tile_size);
  w.put<std::int32_t>(h.bands);
  w.put<std::uint8_t>(h.kind);
  w.put<std::uint8_t>(0);
  w.put<std::uint8_t>(0);
  w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(h.count);
}

Header read_header(Reader& r, const fs::path& p) {
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a tile shard: " + p.string());
  Header h{};
  h.tile_size = r.get<std::int32_t>();
  h.bands = r.get<std::int32_t>();
  h.kind = r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  h.count = r.get<std::uint64_t>();
  return h;
}

struct ParsedRecord {
  raster::Tile tile;
  std::int32_t label, scene;
  std::uint8_t area, variant;
  std::vector<std::uint8_t> mask;
};

ParsedRecord read_record(Reader& r, const Header& h, bool with_mask) {
  ParsedRecord rec;
  rec.scene = r.get<std::int32_t>();
  auto& t = rec.tile;
  t.tile_size = h.tile_size;
  t.bands = h.bands;
  t.grid_row = r.get<std::int32_t>();
  t.grid_col = r.get<std::int32_t>();
  t.window.x0 = r.get<std::int32_t>();
  t.window.y0 = r.get<std::int32_t>();
  t.window.w = r.get<std::int32_t>();
  t.window.h = r.get<std::int32_t>();
  t.padded = r.get<std::uint8_t>() != 0;
  rec.area = r.get<std::uint8_t>();
  rec.variant = r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  rec.label = r.get<std::int32_t>();
  const std::size_t area = static_cast<std::size_t>(h.tile_size) * h.tile_size;
  r.get_array(t.pixels, area * h.bands);
  r.get_array(t.validity, area);
  if (with_mask) r.get_array(rec.mask, area);
  return rec;
}

std::string shard_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard_%05zu.bin", i);
  return buf;
}

void prepare_dir(const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("shard_", 0) == 0) fs::remove(entry.path());
  }
}

template <typename Tile, typename ToRecord>
void write_dataset(const fs::path& dir, const std::vector<Tile>& tiles, DatasetManifest manifest,
                   std::size_t per_shard, DatasetKind kind, ToRecord to_record) {
  if (per_shard == 0) throw Error("records_per_shard must be positive");
  manifest.validate();
  prepare_dir(dir);
  const int tile_size = tiles.empty() ? manifest.tile_size : tiles.front().tile.tile_size;
  const int bands = tiles.empty() ? 0 : tiles.front().tile.bands;
  json shards = json::array();
  for (std::size_t start = 0, i = 0; start < tiles.size() || (tiles.empty() && i == 0); start += per_shard, ++i) {
    const std::size_t end = std::min(tiles.size(), start + per_shard);
    const fs::path p = dir / shard_name(i);
    Writer w(p);
    write_header(w, {tile_size, bands, static_cast<std::uint8_t>(kind), end - start});
    for (std::size_t k = start; k < end; ++k) write_record(w, to_record(tiles[k]), kind == DatasetKind::labeled);
    w.finish(p);
    shards.push_back({{"file", p.filename().string()}, {"records", end - start}});
    if (tiles.empty()) break;
  }
  json j = manifest_to_json(manifest);
  j["shards"] = shards;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

json read_manifest_json(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  std::ifstream in(p);
  if (!in) throw Error("dataset manifest not found: " + p.string());
  return json::parse(in);
}

template <typename Fn>
void for_each_record(const fs::path& dir, const json& manifest, DatasetKind kind, Fn&& fn) {
  for (const auto& shard : manifest.at("shards")) {
    const fs::path p = dir / shard.at("file").get<std::string>();
    Reader r(p);
    const Header h = read_header(r, p);
    if (h.kind != static_cast<std::uint8_t>(kind)) throw Error("shard kind mismatch in " + p.string());
    for (std::uint64_t i = 0; i < h.count; ++i) fn(read_record(r, h, kind == DatasetKind::labeled));
  }
}

}  // namespace

json manifest_to_json(const DatasetManifest& m) {
  json counts = json::object();
  for (const auto& [area, by_label] : m.class_counts) {
    json inner = json::object();
    for (const auto& [label, n] : by_label) inner[std::to_string(label)] = n;
    counts[area] = inner;
  }
  json j{{"dataset_kind", to_string(m.kind)},
         {"class_counts", counts},
         {"total", m.total},
         {"source_scenes", m.source_scenes},
         {"augmentation_factor", m.augmentation_factor},
         {"seeds", m.seeds},
         {"pad_mode", raster::to_string(m.pad_mode)},
         {"tile_size", m.tile_size},
         {"dropped_void_tiles", m.dropped_void_tiles},
         {"config_hash", m.config_hash}};
  j["k"] = m.k ? json(*m.k) : json(nullptr);
  j["split_ratio"] = m.split_ratio ? json(*m.split_ratio) : json(nullptr);
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.kind = j.at("dataset_kind").get<std::string>() == "labeled" ? DatasetKind::labeled : DatasetKind::cluster;
  for (const auto& [area, inner] : j.at("class_counts").items())
    for (const auto& [label, n] : inner.items()) m.class_counts[area][std::stoi(label)] = n.get<std::size_t>();
  m.total = j.at("total").get<std::size_t>();
  m.source_scenes = j.at("source_scenes").get<std::vector<std::string>>();
  if (!j.at("k").is_null()) m.k = j.at("k").get<int>();
  m.augmentation_factor = j.at("augmentation_factor").get<int>();
  if (!j.at("split_ratio").is_null()) m.split_ratio = j.at("split_ratio").get<double>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.pad_mode = raster::pad_mode_from_string(j.at("pad_mode").get<std::string>());
  m.tile_size = j.at("tile_size").get<int>();
  m.dropped_void_tiles = j.value("dropped_void_tiles", std::size_t{0});
  m.config_hash = j.value("config_hash", std::string());
  return m;
}

void write_labeled(const fs::path& dir, const LabeledDataset& ds, std::size_t per_shard) {
  write_dataset(dir, ds.tiles, ds.manifest, per_shard, DatasetKind::labeled, [](const LabeledTile& t) {
    return Record{&t.tile, t.label, t.scene, static_cast<std::uint8_t>(t.area == Area::train ? 0 : 1),
                  static_cast<std::uint8_t>(t.variant), &t.target_mask};
  });
}

void write_cluster(const fs::path& dir, const ClusterDataset& ds, std::size_t per_shard) {
  write_dataset(dir, ds.tiles, ds.manifest, per_shard, DatasetKind::cluster, [](const ClusterTile& t) {
    return Record{&t.tile, t.cluster_label, t.scene, 0, 0, nullptr};
  });
}

DatasetManifest read_manifest(const fs::path& dir) { return manifest_from_json(read_manifest_json(dir)); }

LabeledDataset read_labeled(const fs::path& dir) {
  const json j = read_manifest_json(dir);
  LabeledDataset ds;
  ds.manifest = manifest_from_json(j);
  if (ds.manifest.kind != DatasetKind::labeled) throw Error(dir.string() + " is not a labeled dataset");
  for_each_record(dir, j, DatasetKind::labeled, [&](ParsedRecord&& r) {
    LabeledTile t;
    t.tile = std::move(r.tile);
    t.label = r.label;
    t.scene = r.scene;
    t.area = r.area == 0 ? Area::train : Area::test;
    t.variant = static_cast<Flip>(r.variant);
    t.target_mask = std::move(r.mask);
    ds.tiles.push_back(std::move(t));
  });
  if (ds.tiles.size() != ds.manifest.total) throw Error("record count disagrees with manifest in " + dir.string());
  return ds;
}

ClusterDataset read_cluster(const fs::path& dir) {
  const json j = read_manifest_json(dir);
  ClusterDataset ds;
  ds.manifest = manifest_from_json(j);
  if (ds.manifest.kind != DatasetKind::cluster) throw Error(dir.string() + " is not a cluster dataset");
  for_each_record(dir, j, DatasetKind::cluster, [&](ParsedRecord&& r) {
    ds.tiles.push_back({std::move(r.tile), r.label, r.scene});
  });
  if (ds.tiles.size() != ds.manifest.total) throw Error("record count disagrees with manifest in " + dir.string());
  return ds;
}

}  // namespace relict::datasets
