#include "relict/models/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "relict/core/error.hpp"
#include "relict/core/hash.hpp"

namespace relict::models {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {
constexpr char kMagic[8] = {'R', 'L', 'C', 'K', 'P', 'T', '0', '1'};
}

Checkpoint make_checkpoint(const Network& net, json provenance) {
  return Checkpoint{net.spec(), net.seed(), net.snapshot(), std::move(provenance)};
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.store.tensors) {
    const auto s = t.shape();
    index.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += t.numel();
  }
  const json header{{"format", "relict-checkpoint"},
                    {"version", 1},
                    {"spec", ckpt.spec.to_json()},
                    {"fingerprint", ckpt.spec.fingerprint()},
                    {"seed", ckpt.seed},
                    {"provenance", ckpt.provenance},
                    {"checksum", to_hex(ckpt.store.checksum())},
                    {"tensors", index}};
  const std::string text = header.dump();
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.store.tensors)
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || len > (1u << 28))
    throw Error("not a checkpoint: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);
  Checkpoint ckpt;
  ckpt.spec = ModelSpec::from_json(header.at("spec"));
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.provenance = header.at("provenance");
  for (const auto& entry : header.at("tensors")) {
    const auto dims = entry.at("shape").get<std::vector<int>>();
    nn::Tensor t(nn::Shape{dims.at(0), dims.at(1), dims.at(2), dims.at(3)});
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    ckpt.store.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  if (!in) throw Error("truncated checkpoint " + path.string());
  if (to_hex(ckpt.store.checksum()) != header.at("checksum").get<std::string>())
    throw Error("checkpoint checksum mismatch in " + path.string());
  return ckpt;
}

std::unique_ptr<Network> instantiate(const Checkpoint& ckpt, const ModelSpec* expected) {
  if (expected && expected->fingerprint() != ckpt.spec.fingerprint())
    throw Error("checkpoint spec " + ckpt.spec.fingerprint() + " does not match expected " + expected->fingerprint());
  auto net = build_network(ckpt.spec, ckpt.seed);
  net->parameters().load(ckpt.store);
  return net;
}

}  // namespace relict::models
