#pragma once

#include <filesystem>
#include <json.hpp>

#include "relict/datasets/datasets.hpp"

namespace relict::datasets {

/// Records per shard file unless overridden.
inline constexpr std::size_t kDefaultShardRecords = 4096;

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Writes `manifest.json` plus `shard_NNNNN.bin` files into `dir` (created if
/// needed, previous shards removed). Layout: docs/shard_format.md.
void write_labeled(const std::filesystem::path& dir, const LabeledDataset& ds,
                   std::size_t records_per_shard = kDefaultShardRecords);
void write_cluster(const std::filesystem::path& dir, const ClusterDataset& ds,
                   std::size_t records_per_shard = kDefaultShardRecords);

LabeledDataset read_labeled(const std::filesystem::path& dir);
ClusterDataset read_cluster(const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& dir);

}  // namespace relict::datasets
