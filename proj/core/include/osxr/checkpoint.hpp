#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "osxr/dagan.hpp"
#include "osxr/dataset.hpp"
#include "osxr/layers.hpp"

namespace osxr {

inline constexpr char kCheckpointMagic[] = "OSXR1";

/// Everything a serving or training process needs to resume: the embedding
/// network, the optional DAGAN pair, the standard set with cached latents,
/// and a version that only ever grows.
struct ModelCheckpoint {
  std::uint64_t version = 0;
  std::optional<EmbeddingNetwork> network;
  std::optional<DaganGenerator> generator;
  std::optional<DaganDiscriminator> discriminator;
  StandardSet standard;
  /// Free-form creation metadata (created_at, last_eval, run config, ...).
  nlohmann::json info = nlohmann::json::object();

  std::vector<std::string> categories() const { return standard.categories(); }
};

nlohmann::json to_json(const EmbeddingConfig& c);
EmbeddingConfig embedding_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DaganConfig& c);
DaganConfig dagan_config_from_json(const nlohmann::json& j);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

/// Binary layout, all integers little-endian:
///   "OSXR1"
///   u32 tensor count, then per tensor: u32 name length, name, u32 rank,
///       u64 extent per axis, float32 values
///   u32 category count, then per category: u32 name length, name,
///       u32 member count, then per member: u32 id length, id, u32 dim, float32 values
///   u64 version
///   u32 metadata length, metadata JSON (configs and info)
std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt);

/// Throws CheckpointError on any structural problem, including trailing bytes.
ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace osxr
