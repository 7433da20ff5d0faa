#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <psvf/analytics.hpp>
#include <psvf/augment.hpp>
#include <psvf/mel.hpp>
#include <psvf/model.hpp>
#include <psvf/train.hpp>

namespace psvf::cli {

inline constexpr const char* kConfigEnv = "PSVF_CONFIG";

struct RunConfig {
  // Canonical dataset directory, or the three raw files plus a column map.
  std::string data_dir;
  std::string segments_csv;
  std::string participants_csv;
  std::string responses_csv;
  std::string column_map;
  std::string audio_dir;     // base for relative audio_ref / stem_ref
  std::string features_dir;  // PSVFMEL1 cache
  std::string output_dir = "psvf_out";
  std::uint64_t seed = 0;
  bool filter = true;

  MelConfig mel;
  TdnnConfig model;
  TrainConfig train;
  AnalyticsOptions analytics;
};

// Reads a JSON config. Relative paths in the file resolve against the file's
// directory. Unknown keys are rejected. Throws ConfigError, IoError.
RunConfig load_run_config(const std::string& path);

// The top-level seed drives weight init, fold assignment, batch order and
// augmentation draws.
void propagate_seed(RunConfig& cfg);

// Fully resolved config as pretty JSON (written into every output directory).
std::string to_json(const RunConfig& cfg);

// FNV-1a of the compact resolved config, as hex.
std::string config_hash(const RunConfig& cfg);

// run_config.json and VERSION inside dir (created if missing).
void stamp_output_dir(const std::string& dir, const RunConfig& cfg);

}  // namespace psvf::cli
