#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "psvf/audio.hpp"
#include "psvf/dataset.hpp"

namespace psvf {

// Resampling speed change: duration and pitch both scale. The result has
// round(N / factor) samples at the unchanged nominal rate; factor 1 returns
// the input untouched.
Waveform speed_perturb(const Waveform& w, double factor);

struct AugmentPolicy {
  std::vector<double> speed_factors{0.9, 1.0, 1.1};  // drawn uniformly
  double stem_probability = 0.5;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

// Independent stream per (seed, segment, salt) so that parallel feature
// preparation never changes which augmentation a segment receives.
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view segment_id,
                           std::uint64_t salt = 0);

// Uniform in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

// Returns the stem with probability stem_probability when one is present,
// otherwise audio_ref. Always consumes exactly one draw. Throws MissingAudio
// when the segment has no audio_ref.
std::string choose_source(const SegmentMeta& seg, const AugmentPolicy& policy,
                          std::mt19937_64& rng);

struct AugmentChoice {
  double speed = 1.0;
  bool use_stem = false;

  bool operator==(const AugmentChoice&) const = default;
};

// Draws the speed factor then the source for one training presentation of a
// segment. Draw order: speed index, then stem coin.
AugmentChoice draw_augmentation(const SegmentMeta& seg, const AugmentPolicy& policy,
                                std::uint64_t epoch);

}  // namespace psvf
