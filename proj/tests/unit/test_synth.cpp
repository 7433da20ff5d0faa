#include <gtest/gtest.h>

#include <filesystem>

#include <psvf/error.hpp>
#include <psvf/mel.hpp>
#include <psvf/synth.hpp>

#include "oracle.hpp"

using namespace psvf;
namespace fs = std::filesystem;

TEST(Synth, ShapeAndScores) {
  SynthSpec s;
  s.n_songs = 10;
  s.segments_per_song = 3;
  const SynthCorpus c = make_synthetic_corpus(s);
  EXPECT_EQ(c.dataset.segments().size(), 30u);
  EXPECT_EQ(c.dataset.participants().size(), 5u);
  EXPECT_EQ(c.audio.size(), 30u);
  for (const SegmentScore& sc : all_scores(c.dataset)) {
    const SegmentMeta* m = c.dataset.find_segment(sc.segment_id);
    EXPECT_NEAR(sc.unit_score, m->singer_sex == Sex::female ? 0.9 : 0.1, 1e-12);
    const Waveform& w = c.audio.at(*m->audio_ref);
    EXPECT_EQ(w.samples.size(), 48000u);
  }
  EXPECT_EQ(filter_valid(c.dataset), c.dataset);
}

TEST(Synth, Deterministic) {
  SynthSpec s;
  s.n_songs = 4;
  const SynthCorpus a = make_synthetic_corpus(s), b = make_synthetic_corpus(s);
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.audio, b.audio);
  s.seed = 1;
  EXPECT_NE(make_synthetic_corpus(s).audio, a.audio);
}

TEST(Synth, PitchFollowsSex) {
  SynthSpec s;
  s.n_songs = 2;
  s.segments_per_song = 1;
  s.noise_std = 0.0;
  const SynthCorpus c = make_synthetic_corpus(s);
  for (const SegmentMeta& m : c.dataset.segments()) {
    const double f0 = oracle::spectral_peak(c.audio.at(*m.audio_ref).samples, 16000, 80, 300);
    if (m.singer_sex == Sex::female)
      EXPECT_GT(f0, 170.0);
    else
      EXPECT_LT(f0, 160.0);
  }
}

TEST(Synth, WritesReadableCorpus) {
  SynthSpec s;
  s.n_songs = 3;
  s.segments_per_song = 2;
  const SynthCorpus c = make_synthetic_corpus(s);
  const fs::path dir = fs::temp_directory_path() / "psvf_test_synth";
  fs::remove_all(dir);
  write_synthetic_corpus(c, dir.string());
  EXPECT_EQ(ingest(DatasetPaths::in_directory(dir.string())), c.dataset);
  for (const SegmentMeta& m : c.dataset.segments()) {
    const Waveform w = load_audio((dir / *m.audio_ref).string(), 16000);
    EXPECT_EQ(w.samples.size(), 48000u);
    EXPECT_EQ(melspectrogram(w).frames(), 298);
  }
}

TEST(Synth, Validation) {
  SynthSpec s;
  s.n_songs = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.segments_per_song = 7;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.harmonics = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}
