#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <psvf/error.hpp>
#include <psvf/train.hpp>

#include "oracle.hpp"

using namespace psvf;
namespace fs = std::filesystem;

namespace {

// Gaussian features seeded by the segment id; speed shifts the seed so
// augmented presentations differ.
class RandomFeatures : public FeatureProvider {
 public:
  explicit RandomFeatures(int frames = 40, float scale = 1.0f) : frames_(frames), scale_(scale) {}
  FeatureMatrix features(const SegmentMeta& seg, const AugmentChoice& c) const override {
    std::seed_seq sq(seg.segment_id.begin(), seg.segment_id.end());
    std::mt19937_64 rng(sq);
    rng.discard(static_cast<unsigned long long>(c.speed * 1000) + (c.use_stem ? 7 : 0));
    std::normal_distribution<float> n(0.f, 1.f);
    FeatureMatrix m(frames_, 24);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale_ * n(rng);
    return m;
  }
  bool supports_augmentation() const override { return true; }

 private:
  int frames_;
  float scale_;
};

class NanFeatures : public FeatureProvider {
 public:
  FeatureMatrix features(const SegmentMeta&, const AugmentChoice&) const override {
    FeatureMatrix m(40, 24);
    m.setConstant(std::numeric_limits<float>::quiet_NaN());
    return m;
  }
};

class NoFeatures : public FeatureProvider {
 public:
  FeatureMatrix features(const SegmentMeta& s, const AugmentChoice&) const override {
    throw MissingFeatures(s.segment_id);
  }
};

// n_songs songs with per_song segments each; one participant rates every
// segment with a value cycling through -2..2.
SurveyDataset corpus(int n_songs, int per_song) {
  std::vector<SegmentMeta> segs;
  std::vector<Response> rs;
  ParticipantMeta p;
  p.participant_id = "p";
  int k = 0;
  for (int s = 0; s < n_songs; ++s)
    for (int j = 0; j < per_song; ++j) {
      SegmentMeta m;
      m.song_id = "song" + std::to_string(1000 + s);
      m.segment_id = m.song_id + "_" + std::to_string(j);
      m.audio_ref = m.segment_id + ".wav";
      segs.push_back(m);
      rs.push_back({"p", m.segment_id, (k++ % 5) - 2, false});
    }
  return SurveyDataset(segs, {p}, rs);
}

std::vector<std::string> songs_of(const SurveyDataset& ds) {
  std::vector<std::string> out;
  for (const auto& s : ds.segments()) out.push_back(s.song_id);
  return out;
}

TrainConfig small_train() {
  TrainConfig t;
  t.batch_size = 4;
  t.max_epochs = 3;
  t.patience = 3;
  t.frozen_blocks = 0;
  t.augment_enabled = false;
  t.validation_fraction = 0.0;
  return t;
}

}  // namespace

TEST(Folds, DeterministicAndOrderIndependent) {
  std::vector<std::string> songs;
  for (int i = 0; i < 50; ++i) songs.push_back("s" + std::to_string(i));
  const FoldPlan a = make_folds(songs, 5, 3);
  std::vector<std::string> rev(songs.rbegin(), songs.rend());
  rev.insert(rev.end(), songs.begin(), songs.begin() + 10);  // duplicates do not matter
  EXPECT_EQ(a, make_folds(rev, 5, 3));
  EXPECT_NE(a.assignments, make_folds(songs, 5, 4).assignments);
  EXPECT_EQ(a.assignments.size(), 50u);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(a.songs_in(f).size(), 10u);
}

TEST(Folds, BalancedWithinOneSong) {
  for (int n : {7, 11, 23, 99}) {
    std::vector<std::string> songs;
    for (int i = 0; i < n; ++i) songs.push_back("x" + std::to_string(i));
    const FoldPlan p = make_folds(songs, 5, 1);
    std::size_t lo = 1000, hi = 0;
    for (int f = 0; f < 5; ++f) {
      lo = std::min(lo, p.songs_in(f).size());
      hi = std::max(hi, p.songs_in(f).size());
    }
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Folds, Errors) {
  EXPECT_THROW(make_folds({"a", "b", "c"}, 5, 0), TooFewSongs);
  EXPECT_THROW(make_folds({"a", "b"}, 1, 0), ConfigError);
}

TEST(Split, CountsOn200Songs) {
  const SurveyDataset ds = corpus(200, 6);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 0);
  for (int f = 0; f < 5; ++f) {
    const FoldSplit s = split_fold(plan, ds.segments(), f, 0.1);
    EXPECT_EQ(s.train.size(), 864u);
    EXPECT_EQ(s.val.size(), 96u);
    EXPECT_EQ(s.test.size(), 240u);
    const FoldSplit z = split_fold(plan, ds.segments(), f, 0.0);
    EXPECT_EQ(z.train.size(), 960u);
    EXPECT_TRUE(z.val.empty());
    EXPECT_EQ(z.test, s.test);
  }
}

TEST(Split, NoSongCrossesPartitions) {
  const SurveyDataset ds = corpus(40, 3);
  const FoldPlan plan = make_folds(songs_of(ds), 4, 9);
  std::set<std::string> seen_test;
  for (int f = 0; f < 4; ++f) {
    const FoldSplit s = split_fold(plan, ds.segments(), f, 0.25);
    auto song = [&](const std::string& id) { return ds.find_segment(id)->song_id; };
    std::set<std::string> tr, va, te;
    for (auto& id : s.train) tr.insert(song(id));
    for (auto& id : s.val) va.insert(song(id));
    for (auto& id : s.test) te.insert(song(id));
    for (auto& x : te) {
      EXPECT_FALSE(tr.count(x) || va.count(x));
      EXPECT_TRUE(seen_test.insert(x).second);
    }
    for (auto& x : va) EXPECT_FALSE(tr.count(x));
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), ds.segments().size());
  }
  EXPECT_EQ(seen_test.size(), 40u);
}

TEST(Split, Errors) {
  const SurveyDataset ds = corpus(10, 1);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 0);
  EXPECT_THROW(split_fold(plan, ds.segments(), 5, 0.1), ConfigError);
  EXPECT_THROW(split_fold(plan, ds.segments(), 0, 1.0), ConfigError);
  SegmentMeta stray;
  stray.segment_id = "z";
  stray.song_id = "unknown";
  EXPECT_THROW(split_fold(plan, {stray}, 0, 0.1), IntegrityError);
}

TEST(Metrics, MeanAndPopulationStd) {
  const MeanStd r = mean_and_std({0.09, 0.10, 0.10, 0.11, 0.10});
  EXPECT_NEAR(r.mean, 0.10, 1e-12);
  EXPECT_NEAR(r.std, 0.0063246, 1e-7);
  EXPECT_DOUBLE_EQ(mae({0.1, 0.9}, {0.5, 0.5}), 0.4);
  EXPECT_THROW(mae({0.1}, {}), LengthMismatch);
  EXPECT_THROW(mae({}, {}), LengthMismatch);
}

TEST(FeatureFileName, SafeAndDistinct) {
  EXPECT_EQ(feature_file_name("song1_3"), "song1_3.mel");
  const std::string a = feature_file_name("a/b"), b = feature_file_name("a_b"),
                    c = feature_file_name("a:b");
  EXPECT_EQ(a.find('/'), std::string::npos);
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(feature_file_name("..").front(), '.');
}

TEST(TrainingLog, Format) {
  const fs::path p = fs::temp_directory_path() / "psvf_test_log.csv";
  write_training_log(p.string(), {{1, 0.25, 0.5, 1e-3, 1.5},
                                  {2, 0.125, std::numeric_limits<double>::quiet_NaN(), 1e-3, 3}});
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(),
            "epoch,train_l1,val_l1,lr,wall_seconds\n1,0.25,0.5,0.001,1.5\n2,0.125,,0.001,3\n");
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  for (int threads : {1, 2, 4}) {
    std::vector<int> hit(100, 0);
    parallel_for(100, threads, [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) EXPECT_EQ(h, 1);
  }
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw IoError("x");
                            }),
               IoError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.validation_fraction = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.adam.lr = -1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.augment.stem_probability = 2;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(TrainFold, ZeroLearningRateKeepsParametersAndLoss) {
  const SurveyDataset ds = corpus(10, 2);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 1);
  TrainConfig t = small_train();
  t.adam.lr = 0.0;
  t.max_epochs = 4;
  t.patience = 4;
  const TdnnConfig cfg = oracle::reduced_config();
  const auto init = Parameters<float>::he_uniform(cfg, 5);
  TrainOptions o;
  o.initial_params = init;
  const FoldResult r = train_fold(ds, scores, plan, 0, cfg, t, RandomFeatures(), o);
  ASSERT_EQ(r.log.size(), 4u);
  for (const EpochLog& e : r.log) EXPECT_EQ(e.train_l1, r.log[0].train_l1);
  auto init_frozen = init;
  apply_freeze(init_frozen, 0);
  EXPECT_EQ(r.checkpoint.params, init_frozen);
  EXPECT_EQ(r.metrics.best_epoch, 1);
}

TEST(TrainFold, OverfitsSixteenSegments) {
  // 20 one-segment songs, 5 folds: 16 train, 4 test.
  const SurveyDataset ds = corpus(20, 1);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 2);
  TrainConfig t = small_train();
  t.batch_size = 16;
  t.max_epochs = 500;
  t.patience = 500;
  double best = 1.0;
  int reached = 0;
  TrainOptions o;
  o.on_epoch = [&](const EpochLog& e) {
    best = std::min(best, e.train_l1);
    if (!reached && e.train_l1 < 0.02) {
      reached = e.epoch;
      throw std::runtime_error("done");  // stop early, the target is met
    }
  };
  TdnnConfig cfg;
  cfg.frozen_blocks = 0;
  try {
    train_fold(ds, scores, plan, 0, cfg, t, RandomFeatures(60), o);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()) != "done") throw;
  }
  EXPECT_GT(reached, 0) << "best train L1 " << best;
}

TEST(TrainFold, DeterministicAcrossRunsAndThreads) {
  const SurveyDataset ds = corpus(12, 2);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 4, 3);
  TrainConfig t = small_train();
  t.augment_enabled = true;
  t.validation_fraction = 0.2;
  t.seed = 42;
  t.augment.rng_seed = 42;
  const TdnnConfig cfg = oracle::reduced_config();
  const FoldResult a = train_fold(ds, scores, plan, 1, cfg, t, RandomFeatures());
  const FoldResult b = train_fold(ds, scores, plan, 1, cfg, t, RandomFeatures());
  t.threads = 3;
  const FoldResult c = train_fold(ds, scores, plan, 1, cfg, t, RandomFeatures());
  for (const FoldResult* r : {&b, &c}) {
    ASSERT_EQ(r->log.size(), a.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      EXPECT_EQ(r->log[i].train_l1, a.log[i].train_l1);
      EXPECT_EQ(r->log[i].val_l1, a.log[i].val_l1);
    }
    EXPECT_EQ(r->checkpoint.params, a.checkpoint.params);
    EXPECT_EQ(r->checkpoint.meta.epoch, a.checkpoint.meta.epoch);
    EXPECT_EQ(r->test_predictions, a.test_predictions);
  }
}

TEST(TrainFold, FrozenBlocksStayBitIdentical) {
  const SurveyDataset ds = corpus(10, 2);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 1);
  TrainConfig t = small_train();
  t.frozen_blocks = 1;
  const TdnnConfig cfg = oracle::reduced_config();
  const auto init = Parameters<float>::he_uniform(cfg, 8);
  TrainOptions o;
  o.initial_params = init;
  const FoldResult r = train_fold(ds, scores, plan, 0, cfg, t, RandomFeatures(), o);
  EXPECT_EQ(r.checkpoint.params.block_weight(0), init.block_weight(0));
  EXPECT_EQ(r.checkpoint.params.block_bias(0), init.block_bias(0));
  EXPECT_NE(r.checkpoint.params.head_weight(), init.head_weight());
  EXPECT_EQ(r.checkpoint.config.frozen_blocks, 1);
}

TEST(TrainFold, EmptyValidationSelectsOnTrainingLoss) {
  const SurveyDataset ds = corpus(10, 2);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 1);
  TrainConfig t = small_train();
  t.max_epochs = 5;
  t.patience = 5;
  const FoldResult r =
      train_fold(ds, scores, plan, 2, oracle::reduced_config(), t, RandomFeatures());
  EXPECT_EQ(r.metrics.n_val, 0);
  double best = 1e9;
  for (const EpochLog& e : r.log) {
    EXPECT_TRUE(std::isnan(e.val_l1));
    best = std::min(best, e.train_l1);
  }
  EXPECT_EQ(r.metrics.best_val_l1, best);
  EXPECT_EQ(r.metrics.n_train + r.metrics.n_test, 20);
}

TEST(TrainFold, BaselineAndPredictions) {
  const SurveyDataset ds = corpus(10, 2);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 1);
  const FoldResult r =
      train_fold(ds, scores, plan, 0, oracle::reduced_config(), small_train(), RandomFeatures());
  std::map<std::string, double> target;
  for (const auto& s : scores) target[s.segment_id] = s.unit_score;
  std::vector<double> p, y, half;
  for (const auto& [id, v] : r.test_predictions) {
    p.push_back(v);
    y.push_back(target.at(id));
    half.push_back(0.5);
  }
  EXPECT_EQ(static_cast<int>(p.size()), r.metrics.n_test);
  EXPECT_DOUBLE_EQ(r.metrics.test_mae, mae(p, y));
  EXPECT_DOUBLE_EQ(r.metrics.baseline_mae, mae(half, y));
}

TEST(TrainFold, Errors) {
  const SurveyDataset ds = corpus(10, 1);
  const auto scores = all_scores(ds);
  const FoldPlan plan = make_folds(songs_of(ds), 5, 1);
  const TdnnConfig cfg = oracle::reduced_config();
  EXPECT_THROW(train_fold(ds, scores, plan, 0, cfg, small_train(), NoFeatures()),
               MissingFeatures);
  EXPECT_THROW(train_fold(ds, scores, plan, 0, cfg, small_train(), NanFeatures()),
               NonFiniteLoss);
  TdnnConfig wide = cfg;
  wide.embed_dim = 16;
  TrainOptions o;
  o.initial_params = Parameters<float>::he_uniform(wide, 1);
  EXPECT_THROW(train_fold(ds, scores, plan, 0, cfg, small_train(), RandomFeatures(), o),
               ShapeMismatch);
}

TEST(CrossValidate, SummaryAggregatesFolds) {
  const SurveyDataset ds = corpus(10, 2);
  const auto scores = all_scores(ds);
  TrainConfig t = small_train();
  t.max_epochs = 2;
  t.patience = 2;
  int calls = 0;
  const CrossValidationSummary s =
      cross_validate(ds, scores, oracle::reduced_config(), t, RandomFeatures(),
                     [&](const FoldResult&) { ++calls; });
  ASSERT_EQ(s.folds.size(), 5u);
  EXPECT_EQ(calls, 5);
  std::vector<double> m;
  int n_test = 0;
  for (const FoldMetrics& f : s.folds) {
    m.push_back(f.test_mae);
    n_test += f.n_test;
  }
  EXPECT_EQ(n_test, 20);
  EXPECT_DOUBLE_EQ(s.mae.mean, mean_and_std(m).mean);
  EXPECT_DOUBLE_EQ(s.mae.std, mean_and_std(m).std);
}
