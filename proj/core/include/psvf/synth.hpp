#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "psvf/audio.hpp"
#include "psvf/dataset.hpp"

namespace psvf {

// Separable toy corpus: each segment is a phrase of harmonic notes near
// low_f0 (male singer, rated toward masculine) or near high_f0 (female
// singer, rated toward feminine), with additive white noise.
struct SynthSpec {
  int n_songs = 200;
  int segments_per_song = 6;
  double segment_seconds = 3.0;
  double sample_rate = 16000.0;
  double low_f0 = 120.0;
  double high_f0 = 220.0;
  double f0_jitter = 0.08;  // relative, uniform in [-jitter, +jitter] per segment
  int harmonics = 8;
  double noise_std = 0.05;
  int n_participants = 5;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct SynthCorpus {
  SurveyDataset dataset;
  // Keyed by audio_ref ("audio/<segment_id>.wav").
  std::map<std::string, Waveform> audio;
};

// Low songs get ratings {-2,-2,-2,-1,-1} (unit score 0.1), high songs
// {2,2,2,1,1} (0.9), cycled over the participants. Songs alternate low/high.
SynthCorpus make_synthetic_corpus(const SynthSpec& spec);

// Canonical CSVs plus one 16-bit WAV per segment under dir/audio.
void write_synthetic_corpus(const SynthCorpus& corpus, const std::string& dir);

}  // namespace psvf
