#include "psvf/config_io.hpp"

#include <set>
#include <type_traits>

#include "json.hpp"
#include "psvf/error.hpp"

namespace psvf {

using nlohmann::ordered_json;

namespace {

ordered_json parse_object(std::string_view text, const char* what) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string(what) + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  return j;
}

void reject_unknown(const ordered_json& j, const std::set<std::string>& known, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError(std::string(what) + ": unknown key '" + it.key() + "'");
}

template <class T>
void take(const ordered_json& j, const char* key, T& out, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) return;
  // get<> would silently truncate 1.5 into an int or accept 1 as a bool.
  bool ok = true;
  if constexpr (std::is_same_v<T, bool>)
    ok = it->is_boolean();
  else if constexpr (std::is_unsigned_v<T>)
    ok = it->is_number_unsigned();
  else if constexpr (std::is_integral_v<T>)
    ok = it->is_number_integer();
  else if constexpr (std::is_floating_point_v<T>)
    ok = it->is_number();
  if (!ok) throw ConfigError(std::string(what) + ": key '" + key + "' has the wrong type");
  try {
    out = it->template get<T>();
  } catch (const ordered_json::exception&) {
    throw ConfigError(std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

ordered_json augment_json(const AugmentPolicy& p) {
  return {{"speed_factors", p.speed_factors},
          {"stem_probability", p.stem_probability},
          {"rng_seed", p.rng_seed}};
}

void merge_augment(const ordered_json& j, AugmentPolicy& p) {
  reject_unknown(j, {"speed_factors", "stem_probability", "rng_seed"}, "augment");
  take(j, "speed_factors", p.speed_factors, "augment");
  take(j, "stem_probability", p.stem_probability, "augment");
  take(j, "rng_seed", p.rng_seed, "augment");
}

}  // namespace

std::string to_json_text(const MelConfig& c) {
  return ordered_json{{"sample_rate", c.sample_rate}, {"window", c.window},
                      {"hop", c.hop},                 {"fft_size", c.fft_size},
                      {"n_mels", c.n_mels},           {"f_min", c.f_min},
                      {"f_max", c.f_max},             {"log_floor", c.log_floor},
                      {"cmvn", c.cmvn}}
      .dump();
}

void merge_json_text(std::string_view text, MelConfig& c) {
  const auto j = parse_object(text, "mel");
  reject_unknown(j,
                 {"sample_rate", "window", "hop", "fft_size", "n_mels", "f_min", "f_max",
                  "log_floor", "cmvn"},
                 "mel");
  take(j, "sample_rate", c.sample_rate, "mel");
  take(j, "window", c.window, "mel");
  take(j, "hop", c.hop, "mel");
  take(j, "fft_size", c.fft_size, "mel");
  take(j, "n_mels", c.n_mels, "mel");
  take(j, "f_min", c.f_min, "mel");
  take(j, "f_max", c.f_max, "mel");
  take(j, "log_floor", c.log_floor, "mel");
  take(j, "cmvn", c.cmvn, "mel");
}

std::string to_json_text(const TdnnConfig& c) {
  ordered_json blocks = ordered_json::array();
  for (const BlockSpec& b : c.blocks)
    blocks.push_back({{"in", b.in_channels},
                      {"out", b.out_channels},
                      {"kernel", b.kernel},
                      {"dilation", b.dilation}});
  return ordered_json{{"blocks", blocks},
                      {"embed_dim", c.embed_dim},
                      {"frozen_blocks", c.frozen_blocks}}
      .dump();
}

void merge_json_text(std::string_view text, TdnnConfig& c) {
  const auto j = parse_object(text, "model");
  reject_unknown(j, {"blocks", "embed_dim", "frozen_blocks"}, "model");
  if (auto it = j.find("blocks"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("model: 'blocks' must be an array");
    std::vector<BlockSpec> blocks;
    for (const auto& b : *it) {
      if (!b.is_object()) throw ConfigError("model: each block must be an object");
      reject_unknown(b, {"in", "out", "kernel", "dilation"}, "model.blocks");
      BlockSpec s;
      take(b, "in", s.in_channels, "model.blocks");
      take(b, "out", s.out_channels, "model.blocks");
      take(b, "kernel", s.kernel, "model.blocks");
      take(b, "dilation", s.dilation, "model.blocks");
      blocks.push_back(s);
    }
    c.blocks = std::move(blocks);
  }
  take(j, "embed_dim", c.embed_dim, "model");
  take(j, "frozen_blocks", c.frozen_blocks, "model");
}

std::string to_json_text(const AugmentPolicy& p) { return augment_json(p).dump(); }

void merge_json_text(std::string_view text, AugmentPolicy& p) {
  merge_augment(parse_object(text, "augment"), p);
}

std::string to_json_text(const TrainConfig& c) {
  return ordered_json{{"lr", c.adam.lr},
                      {"beta1", c.adam.beta1},
                      {"beta2", c.adam.beta2},
                      {"eps", c.adam.eps},
                      {"batch_size", c.batch_size},
                      {"max_epochs", c.max_epochs},
                      {"patience", c.patience},
                      {"seed", c.seed},
                      {"augment_enabled", c.augment_enabled},
                      {"augment", augment_json(c.augment)},
                      {"frozen_blocks", c.frozen_blocks},
                      {"folds", c.folds},
                      {"validation_fraction", c.validation_fraction},
                      {"threads", c.threads},
                      {"prefix_cache_mb", c.prefix_cache_mb}}
      .dump();
}

void merge_json_text(std::string_view text, TrainConfig& c) {
  const auto j = parse_object(text, "train");
  reject_unknown(j,
                 {"lr", "beta1", "beta2", "eps", "batch_size", "max_epochs", "patience", "seed",
                  "augment_enabled", "augment", "frozen_blocks", "folds", "validation_fraction",
                  "threads", "prefix_cache_mb"},
                 "train");
  take(j, "lr", c.adam.lr, "train");
  take(j, "beta1", c.adam.beta1, "train");
  take(j, "beta2", c.adam.beta2, "train");
  take(j, "eps", c.adam.eps, "train");
  take(j, "batch_size", c.batch_size, "train");
  take(j, "max_epochs", c.max_epochs, "train");
  take(j, "patience", c.patience, "train");
  take(j, "seed", c.seed, "train");
  take(j, "augment_enabled", c.augment_enabled, "train");
  if (auto it = j.find("augment"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("train: 'augment' must be an object");
    merge_augment(*it, c.augment);
  }
  take(j, "frozen_blocks", c.frozen_blocks, "train");
  take(j, "folds", c.folds, "train");
  take(j, "validation_fraction", c.validation_fraction, "train");
  take(j, "threads", c.threads, "train");
  take(j, "prefix_cache_mb", c.prefix_cache_mb, "train");
}

}  // namespace psvf
