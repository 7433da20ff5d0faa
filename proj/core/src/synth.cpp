#include "psvf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "psvf/augment.hpp"
#include "psvf/error.hpp"

namespace psvf {

void SynthSpec::validate() const {
  if (n_songs < 1 || segments_per_song < 1 ||
      segments_per_song > static_cast<int>(kMaxSegmentsPerSong))
    throw ConfigError("synth: need at least one song and 1..6 segments per song");
  if (!(segment_seconds > 0.0) || !(sample_rate > 0.0))
    throw ConfigError("synth: segment_seconds and sample_rate must be positive");
  if (!(low_f0 > 0.0) || !(high_f0 > 0.0) || high_f0 * (1 + f0_jitter) * 1.13 * harmonics >= sample_rate / 2)
    throw ConfigError("synth: harmonics must stay below Nyquist");
  if (!(f0_jitter >= 0.0 && f0_jitter < 1.0)) throw ConfigError("synth: f0_jitter must lie in [0, 1)");
  if (harmonics < 1) throw ConfigError("synth: harmonics must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
  if (n_participants < 1) throw ConfigError("synth: n_participants must be positive");
}

namespace {

constexpr int kLowRatings[] = {-2, -2, -2, -1, -1};
constexpr int kHighRatings[] = {2, 2, 2, 1, 1};
constexpr SingerAge kAges[] = {SingerAge::a20_34, SingerAge::a35_49, SingerAge::a50_64,
                               SingerAge::a65_plus};

std::string pad3(int v) {
  std::string s = std::to_string(v);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

// A sung-like phrase: notes of 0.2-0.5 s within two semitones of f0, each
// with a raised-cosine envelope and a short gap, over white noise. Per-segment
// CMVN removes anything stationary, so the notes have to come and go.
Waveform tone(double f0, const SynthSpec& spec, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::llround(spec.segment_seconds * spec.sample_rate));
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.assign(n, 0.0f);
  std::vector<double> phase(static_cast<std::size_t>(spec.harmonics));
  std::size_t pos = 0;
  while (pos < n) {
    const auto len = static_cast<std::size_t>((0.2 + 0.3 * uniform01(rng)) * spec.sample_rate);
    const auto gap = static_cast<std::size_t>((0.03 + 0.07 * uniform01(rng)) * spec.sample_rate);
    const double f = f0 * std::pow(2.0, (4 * uniform01(rng) - 2) / 12.0);
    for (double& p : phase) p = 2 * std::numbers::pi * uniform01(rng);
    const std::size_t end = std::min(n, pos + len);
    for (std::size_t i = pos; i < end; ++i) {
      const double t = static_cast<double>(i - pos) / spec.sample_rate;
      const double env =
          0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i - pos) /
                               static_cast<double>(len));
      double v = 0.0;
      for (int h = 1; h <= spec.harmonics; ++h)
        v += std::sin(2 * std::numbers::pi * f * h * t + phase[static_cast<std::size_t>(h - 1)]) / h;
      w.samples[i] = static_cast<float>(0.3 * env * v);
    }
    pos = end + gap;
  }
  for (float& s : w.samples) {
    // Box-Muller keeps the noise identical across standard libraries.
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
    s = std::clamp(static_cast<float>(s + spec.noise_std * g), -1.0f, 1.0f);
  }
  return w;
}

}  // namespace

SynthCorpus make_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  std::vector<ParticipantMeta> participants;
  for (int p = 0; p < spec.n_participants; ++p) {
    ParticipantMeta m;
    m.participant_id = "p" + pad3(p);
    m.gender = p % 2 == 0 ? Gender::female : Gender::male;
    m.age_group = ParticipantAge::a20_34;
    m.languages = {Language::en};
    participants.push_back(std::move(m));
  }

  SynthCorpus corpus;
  std::vector<SegmentMeta> segments;
  std::vector<Response> responses;
  for (int s = 0; s < spec.n_songs; ++s) {
    const bool high = s % 2 == 1;
    for (int k = 0; k < spec.segments_per_song; ++k) {
      SegmentMeta seg;
      seg.song_id = "song" + pad3(s);
      seg.segment_id = seg.song_id + "_" + std::to_string(k);
      seg.singer_sex = high ? Sex::female : Sex::male;
      seg.singer_age_group = kAges[s / 2 % 4];
      seg.language = kAllLanguages[s / 2 % 5];
      seg.start_time = 0.0;
      seg.duration = spec.segment_seconds;
      seg.audio_ref = "audio/" + seg.segment_id + ".wav";

      auto rng = rng_stream(spec.seed, seg.segment_id, 0x5157);
      const double jitter = (2 * uniform01(rng) - 1) * spec.f0_jitter;
      const double f0 = (high ? spec.high_f0 : spec.low_f0) * (1 + jitter);
      corpus.audio[*seg.audio_ref] = tone(f0, spec, rng);

      for (int p = 0; p < spec.n_participants; ++p) {
        const int r = (high ? kHighRatings : kLowRatings)[p % 5];
        responses.push_back({participants[static_cast<std::size_t>(p)].participant_id,
                             seg.segment_id, r, false});
      }
      segments.push_back(std::move(seg));
    }
  }
  corpus.dataset = SurveyDataset(std::move(segments), std::move(participants), std::move(responses));
  return corpus;
}

void write_synthetic_corpus(const SynthCorpus& corpus, const std::string& dir) {
  write_canonical(corpus.dataset, dir);
  std::filesystem::create_directories(std::filesystem::path(dir) / "audio");
  for (const auto& [ref, w] : corpus.audio)
    write_wav((std::filesystem::path(dir) / ref).string(), w, WavEncoding::pcm16);
}

}  // namespace psvf
