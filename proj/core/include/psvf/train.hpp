#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psvf/augment.hpp"
#include "psvf/checkpoint.hpp"
#include "psvf/dataset.hpp"
#include "psvf/mel.hpp"
#include "psvf/model.hpp"

namespace psvf {

struct FoldPlan {
  int k = 5;
  std::map<std::string, int> assignments;  // song_id -> fold
  std::uint64_t seed = 0;

  std::vector<std::string> songs_in(int fold) const;
  bool operator==(const FoldPlan&) const = default;
};

// Uniform random assignment of songs to k folds, sizes balanced within one
// song. Deterministic under seed and independent of input order. Throws
// TooFewSongs when there are fewer distinct songs than folds.
FoldPlan make_folds(const std::vector<std::string>& songs, int k, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::string> train;  // segment ids, sorted
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// test = segments of the fold's songs; validation = round(fraction * number
// of remaining songs) songs drawn from the rest; train = everything else.
FoldSplit split_fold(const FoldPlan& plan, const std::vector<SegmentMeta>& segments, int fold,
                     double validation_fraction = 0.1);

// Supplies model input for one presentation of a segment. The unaugmented
// presentation is AugmentChoice{1.0, false}.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  // Throws MissingFeatures when nothing can be produced for the segment.
  virtual FeatureMatrix features(const SegmentMeta& seg, const AugmentChoice& choice) const = 0;
  virtual bool supports_augmentation() const { return false; }
};

// Decodes audio_ref / stem_ref (relative paths resolve against base_dir),
// cuts the segment, applies the speed factor and computes log-mels. Plain
// presentations are read from cache_dir first when one is given.
class AudioFeatureProvider : public FeatureProvider {
 public:
  AudioFeatureProvider(std::string base_dir, MelConfig mel, std::string cache_dir = "");
  FeatureMatrix features(const SegmentMeta& seg, const AugmentChoice& choice) const override;
  bool supports_augmentation() const override { return true; }

  Waveform segment_audio(const SegmentMeta& seg, bool use_stem) const;

 private:
  std::string base_dir_;
  MelConfig mel_;
  std::string cache_dir_;
};

// Reads <dir>/<segment file name>.mel written by featurize. No augmentation.
class CachedFeatureProvider : public FeatureProvider {
 public:
  explicit CachedFeatureProvider(std::string dir);
  FeatureMatrix features(const SegmentMeta& seg, const AugmentChoice& choice) const override;

 private:
  std::string dir_;
};

// Segment-length waveforms held in memory, keyed by the audio_ref / stem_ref
// value (synthetic corpora, tests).
class WaveformFeatureProvider : public FeatureProvider {
 public:
  WaveformFeatureProvider(std::map<std::string, Waveform> audio, MelConfig mel);
  FeatureMatrix features(const SegmentMeta& seg, const AugmentChoice& choice) const override;
  bool supports_augmentation() const override { return true; }

 private:
  std::map<std::string, Waveform> audio_;
  MelConfig mel_;
};

// File name used for a segment's cached features (id with unsafe characters
// replaced, plus ".mel").
std::string feature_file_name(const std::string& segment_id);

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  bool augment_enabled = true;
  AugmentPolicy augment;
  int frozen_blocks = 2;
  int folds = 5;
  double validation_fraction = 0.1;
  int threads = 1;
  // Budget for caching activations of the frozen blocks per presentation.
  std::size_t prefix_cache_mb = 1536;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLog {
  int epoch = 0;
  double train_l1 = 0.0;
  double val_l1 = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct FoldMetrics {
  int fold = 0;
  double test_mae = 0.0;
  double baseline_mae = 0.0;  // constant 0.5 predictor on the same test set
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_l1 = 0.0;
};

struct FoldResult {
  Checkpoint checkpoint;  // best-validation parameters
  FoldMetrics metrics;
  std::vector<EpochLog> log;
  std::vector<std::pair<std::string, double>> test_predictions;  // (segment_id, score)
};

struct TrainOptions {
  // Warm start; must match the model config. Random He init otherwise.
  std::optional<Parameters<float>> initial_params;
  // Called after every epoch.
  std::function<void(const EpochLog&)> on_epoch;
};

// Trains one fold and returns the best-validation checkpoint with its test
// MAE. Targets are unit scores; segments without a score are skipped. With
// an empty validation set the training L1 drives model selection. Throws
// MissingFeatures or NonFiniteLoss.
FoldResult train_fold(const SurveyDataset& dataset, const std::vector<SegmentScore>& scores,
                      const FoldPlan& plan, int fold, const TdnnConfig& model_cfg,
                      const TrainConfig& train_cfg, const FeatureProvider& features,
                      const TrainOptions& options = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};
MeanStd mean_and_std(const std::vector<double>& values);

struct CrossValidationSummary {
  std::vector<FoldMetrics> folds;
  MeanStd mae;
  MeanStd baseline;
};

// Builds the fold plan from the dataset's songs and trains every fold in
// order. on_fold receives each result as soon as it is available.
CrossValidationSummary cross_validate(
    const SurveyDataset& dataset, const std::vector<SegmentScore>& scores,
    const TdnnConfig& model_cfg, const TrainConfig& train_cfg, const FeatureProvider& features,
    const std::function<void(const FoldResult&)>& on_fold = {},
    const std::function<void(int fold, const EpochLog&)>& on_epoch = {});

// Mean absolute error. Throws LengthMismatch.
double mae(const std::vector<double>& pred, const std::vector<double>& target);

// CSV with header epoch,train_l1,val_l1,lr,wall_seconds.
void write_training_log(const std::string& path, const std::vector<EpochLog>& log);

// Runs fn(i) for i in [0, n) on up to threads workers. Results must be
// written to per-index slots for the outcome to be schedule-independent.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace psvf
