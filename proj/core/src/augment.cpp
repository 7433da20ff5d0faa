#include "psvf/augment.hpp"

#include <cmath>

#include "psvf/error.hpp"
#include "util.hpp"

namespace psvf {

Waveform speed_perturb(const Waveform& w, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("speed factor must be positive");
  if (factor == 1.0) return w;
  Waveform out;
  out.sample_rate = w.sample_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(w.samples.size()) / factor));
  out.samples = resample_at_step(w.samples, factor, out_len);
  return out;
}

void AugmentPolicy::validate() const {
  if (speed_factors.empty()) throw ConfigError("augment: speed_factors is empty");
  for (double f : speed_factors)
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("augment: speed factors must be > 0");
  if (!(stem_probability >= 0.0 && stem_probability <= 1.0))
    throw ConfigError("augment: stem_probability must be in [0, 1]");
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view segment_id, std::uint64_t salt) {
  const std::uint64_t h = splitmix64(splitmix64(seed) ^ detail::fnv1a(segment_id) ^
                                     splitmix64(salt + 0x632BE59BD9B4E019ULL));
  return std::mt19937_64(h);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string choose_source(const SegmentMeta& seg, const AugmentPolicy& policy,
                          std::mt19937_64& rng) {
  if (!seg.audio_ref) throw MissingAudio("segment '" + seg.segment_id + "' has no audio_ref");
  const double u = uniform01(rng);
  if (seg.stem_ref && u < policy.stem_probability) return *seg.stem_ref;
  return *seg.audio_ref;
}

AugmentChoice draw_augmentation(const SegmentMeta& seg, const AugmentPolicy& policy,
                                std::uint64_t epoch) {
  auto rng = rng_stream(policy.rng_seed, seg.segment_id, epoch);
  AugmentChoice c;
  const auto n = policy.speed_factors.size();
  auto idx = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  if (idx >= n) idx = n - 1;
  c.speed = policy.speed_factors[idx];
  const double u = uniform01(rng);
  c.use_stem = seg.stem_ref.has_value() && u < policy.stem_probability;
  return c;
}

}  // namespace psvf
