#pragma once

#include <string>
#include <string_view>

#include "psvf/augment.hpp"
#include "psvf/mel.hpp"
#include "psvf/model.hpp"
#include "psvf/train.hpp"

namespace psvf {

// Compact JSON with every field spelled out. Key order is fixed so the text
// can be hashed for provenance.
std::string to_json_text(const MelConfig& cfg);
std::string to_json_text(const TdnnConfig& cfg);
std::string to_json_text(const AugmentPolicy& policy);
std::string to_json_text(const TrainConfig& cfg);

// Overwrites the fields present in a JSON object, leaving the rest as they
// are. Unknown keys and wrongly typed values throw ConfigError.
void merge_json_text(std::string_view json, MelConfig& cfg);
void merge_json_text(std::string_view json, TdnnConfig& cfg);
void merge_json_text(std::string_view json, AugmentPolicy& policy);
void merge_json_text(std::string_view json, TrainConfig& cfg);

}  // namespace psvf
