#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace psvf {

// Mono audio. Samples are finite and nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  double sample_rate = 16000.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  bool operator==(const Waveform&) const = default;
};

// Reads RIFF/WAVE with 8/16/24/32-bit integer PCM or 32-bit float samples
// (plain or WAVE_FORMAT_EXTENSIBLE). Channels are averaged to mono and the
// result resampled to target_rate. Throws IoError or UnsupportedFormat.
Waveform load_audio(const std::string& path, double target_rate);

// Decodes a WAV without resampling or downmixing; one vector per channel.
struct WavData {
  std::vector<std::vector<float>> channels;
  double sample_rate = 0.0;
};
WavData read_wav(const std::string& path);

enum class WavEncoding { pcm16, float32 };
void write_wav(const std::string& path, const std::vector<std::vector<float>>& channels,
               double sample_rate, WavEncoding encoding = WavEncoding::pcm16);
void write_wav(const std::string& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::pcm16);

// Band-limited (Hann-windowed sinc) resampling. Output length is
// round(N * to_rate / from_rate); equal rates return the input unchanged.
std::vector<float> resample(const std::vector<float>& samples, double from_rate, double to_rate);

// Evaluates the input at positions n * step (in input samples) for
// n = 0..out_len-1 through a windowed-sinc kernel whose cutoff follows the
// decimation ratio. The building block of resample() and speed_perturb().
std::vector<float> resample_at_step(const std::vector<float>& samples, double step,
                                    std::size_t out_len);

// Slice of round(duration * rate) samples starting at round(start * rate).
// A tail running past the end is zero-padded and the pad length reported
// through padded. Throws OutOfRange when start lies at or beyond the end.
Waveform extract_segment(const Waveform& w, double start, double duration,
                         std::size_t* padded = nullptr);

}  // namespace psvf
