#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>

#include "psvf/audio.hpp"

namespace psvf {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMelBins = 24;

struct MelConfig {
  double sample_rate = 16000.0;
  int window = 400;  // 25 ms, periodic Hann
  int hop = 160;     // 10 ms
  int fft_size = 512;
  int n_mels = kMelBins;
  double f_min = 20.0;
  double f_max = 7600.0;
  double log_floor = 1e-10;
  bool cmvn = true;  // per-segment mean subtraction per mel bin

  // Throws ConfigError.
  void validate() const;
  bool operator==(const MelConfig&) const = default;
};

// frames x n_mels
struct MelSpec {
  FeatureMatrix matrix;
  MelConfig config;

  Eigen::Index frames() const { return matrix.rows(); }
};

// 1 + floor((n - window) / hop) for n >= window, else 0.
std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg);

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f/700)
double mel_to_hz(double mel);

// n_mels + 2 band edges in Hz, equally spaced on the mel scale.
Eigen::VectorXd mel_band_edges(const MelConfig& cfg);

// n_mels x (fft_size/2 + 1) triangular filters, each scaled to unit area in Hz
// (2 / (upper edge - lower edge)).
Eigen::MatrixXd mel_filterbank(const MelConfig& cfg);

// Power spectrum -> mel filterbank -> natural log of max(v, log_floor) ->
// optional CMVN. Throws TooShort when w has fewer than window samples and
// ConfigError when the rates differ.
MelSpec melspectrogram(const Waveform& w, const MelConfig& cfg = {});

// Feature cache file: "PSVFMEL1", u32 frames, u32 n_mels, then frames*n_mels
// little-endian float32 values, row-major.
void write_mel_cache(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_mel_cache(const std::string& path);

}  // namespace psvf
