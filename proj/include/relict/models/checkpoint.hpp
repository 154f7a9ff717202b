#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "relict/models/network.hpp"

namespace relict::models {

/// Parameter store plus everything needed to rebuild and validate the network.
struct Checkpoint {
  ModelSpec spec;
  std::uint64_t seed = 0;
  ParameterStore store;
  nlohmann::json provenance = nlohmann::json::object();
};

Checkpoint make_checkpoint(const Network& net, nlohmann::json provenance = nlohmann::json::object());

/// Binary layout: magic "RLCKPT01", u64 header length, JSON header (spec,
/// fingerprint, seed, provenance, tensor index, checksum), then the tensors'
/// float64 values in index order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds the network described by the checkpoint and loads its parameters.
/// When `expected` is given its fingerprint must match the checkpoint's.
std::unique_ptr<Network> instantiate(const Checkpoint& ckpt, const ModelSpec* expected = nullptr);

}  // namespace relict::models
