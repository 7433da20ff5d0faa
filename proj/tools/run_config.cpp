#include "run_config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <psvf/config_io.hpp>
#include <psvf/error.hpp>

#include "json.hpp"

namespace psvf::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const std::set<std::string> kTopKeys = {"data_dir",  "segments_csv", "participants_csv",
                                        "responses_csv", "column_map", "audio_dir",
                                        "features_dir", "output_dir", "seed",
                                        "filter",    "mel",          "model",
                                        "train",     "augment",      "analytics"};

std::string rebase(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

template <class T>
void take(const ordered_json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const ordered_json::exception&) {
    throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  ordered_json j;
  try {
    j = ordered_json::parse(ss.str());
  } catch (const ordered_json::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kTopKeys.count(it.key())) throw ConfigError(path + ": unknown key '" + it.key() + "'");

  RunConfig cfg;
  take(j, "data_dir", cfg.data_dir);
  take(j, "segments_csv", cfg.segments_csv);
  take(j, "participants_csv", cfg.participants_csv);
  take(j, "responses_csv", cfg.responses_csv);
  take(j, "column_map", cfg.column_map);
  take(j, "audio_dir", cfg.audio_dir);
  take(j, "features_dir", cfg.features_dir);
  take(j, "output_dir", cfg.output_dir);
  take(j, "filter", cfg.filter);
  if (j.contains("mel")) merge_json_text(j["mel"].dump(), cfg.mel);
  if (j.contains("model")) merge_json_text(j["model"].dump(), cfg.model);
  if (j.contains("train")) merge_json_text(j["train"].dump(), cfg.train);
  if (j.contains("augment")) merge_json_text(j["augment"].dump(), cfg.train.augment);
  if (auto it = j.find("analytics"); it != j.end()) {
    for (auto a = it->begin(); a != it->end(); ++a)
      if (a.key() != "zero_mean_aligns" && a.key() != "unsure_inclusive")
        throw ConfigError(path + ": unknown key 'analytics." + a.key() + "'");
    take(*it, "zero_mean_aligns", cfg.analytics.zero_mean_aligns);
    take(*it, "unsure_inclusive", cfg.analytics.unsure_inclusive);
  }
  cfg.seed = cfg.train.seed;
  take(j, "seed", cfg.seed);

  const fs::path base = fs::path(path).parent_path();
  for (std::string* p : {&cfg.data_dir, &cfg.segments_csv, &cfg.participants_csv,
                         &cfg.responses_csv, &cfg.column_map, &cfg.audio_dir, &cfg.features_dir,
                         &cfg.output_dir})
    *p = rebase(base, *p);
  propagate_seed(cfg);
  return cfg;
}

void propagate_seed(RunConfig& cfg) {
  cfg.train.seed = cfg.seed;
  cfg.train.augment.rng_seed = cfg.seed;
}

namespace {

ordered_json to_ordered(const RunConfig& cfg) {
  ordered_json j;
  j["data_dir"] = cfg.data_dir;
  j["segments_csv"] = cfg.segments_csv;
  j["participants_csv"] = cfg.participants_csv;
  j["responses_csv"] = cfg.responses_csv;
  j["column_map"] = cfg.column_map;
  j["audio_dir"] = cfg.audio_dir;
  j["features_dir"] = cfg.features_dir;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["filter"] = cfg.filter;
  j["mel"] = ordered_json::parse(to_json_text(cfg.mel));
  j["model"] = ordered_json::parse(to_json_text(cfg.model));
  j["train"] = ordered_json::parse(to_json_text(cfg.train));
  j["analytics"] = {{"zero_mean_aligns", cfg.analytics.zero_mean_aligns},
                    {"unsure_inclusive", cfg.analytics.unsure_inclusive}};
  return j;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string to_json(const RunConfig& cfg) { return to_ordered(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_ordered(cfg).dump())));
  return buf;
}

void stamp_output_dir(const std::string& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "run_config.json", std::ios::binary);
    if (!os) throw IoError("cannot write " + (fs::path(dir) / "run_config.json").string());
    os << to_json(cfg);
  }
  std::ofstream os(fs::path(dir) / "VERSION", std::ios::binary);
  if (!os) throw IoError("cannot write " + (fs::path(dir) / "VERSION").string());
  os << "psvf " << PSVF_VERSION << "\n";
}

}  // namespace psvf::cli
