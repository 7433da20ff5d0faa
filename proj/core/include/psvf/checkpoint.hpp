#pragma once

#include <cstdint>
#include <string>

#include "psvf/model.hpp"

namespace psvf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  int fold = -1;  // -1 when not produced by cross-validation
  // Resolved training configuration as compact JSON, kept for provenance.
  std::string train_config_json = "{}";

  bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TdnnConfig config;
  Parameters<float> params;
  TrainingMeta meta;

  bool operator==(const Checkpoint&) const = default;
};

// Layout: "PSVFCKPT", u32 version, u32 header length, JSON header (config,
// tensor directory with name/shape/offset/frozen, metadata), then the raw
// little-endian float32 tensor data. Offsets are in bytes from the start of
// the data section.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Validates the embedded config and every tensor shape against it; when
// expected is given, also requires the embedded config to match it
// structurally. Throws IoError (missing/truncated file), VersionMismatch,
// ShapeMismatch. Nothing is returned on failure.
Checkpoint load_checkpoint(const std::string& path, const TdnnConfig* expected = nullptr);

}  // namespace psvf
