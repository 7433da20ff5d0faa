#include "psvf/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "psvf/config_io.hpp"
#include "psvf/error.hpp"
#include "util.hpp"

namespace psvf {

namespace fs = std::filesystem;

namespace {

// Portable Fisher-Yates; std::shuffle is not specified bit-for-bit across
// standard libraries.
template <class V>
void shuffle_in_place(V& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(v[i - 1], v[j]);
  }
}

std::string resolve(const std::string& base, const std::string& ref) {
  fs::path p(ref);
  if (p.is_absolute() || base.empty()) return p.string();
  return (fs::path(base) / p).string();
}

FeatureMatrix waveform_features(const Waveform& segment, const AugmentChoice& choice,
                                const MelConfig& mel) {
  if (choice.speed == 1.0) return melspectrogram(segment, mel).matrix;
  return melspectrogram(speed_perturb(segment, choice.speed), mel).matrix;
}

}  // namespace

std::vector<std::string> FoldPlan::songs_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [song, f] : assignments)
    if (f == fold) out.push_back(song);
  return out;
}

FoldPlan make_folds(const std::vector<std::string>& songs, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("make_folds: k must be at least 2");
  std::set<std::string> unique(songs.begin(), songs.end());
  if (unique.size() < static_cast<std::size_t>(k))
    throw TooFewSongs("make_folds: " + std::to_string(unique.size()) + " songs for " +
                      std::to_string(k) + " folds");
  std::vector<std::string> order(unique.begin(), unique.end());
  auto rng = rng_stream(seed, "folds");
  shuffle_in_place(order, rng);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i)
    plan.assignments[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

FoldSplit split_fold(const FoldPlan& plan, const std::vector<SegmentMeta>& segments, int fold,
                     double validation_fraction) {
  if (fold < 0 || fold >= plan.k)
    throw ConfigError("split_fold: fold " + std::to_string(fold) + " outside 0.." +
                      std::to_string(plan.k - 1));
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("split_fold: validation_fraction must lie in [0, 1)");

  std::vector<std::string> rest;
  for (const auto& [song, f] : plan.assignments)
    if (f != fold) rest.push_back(song);
  auto rng = rng_stream(plan.seed, "validation", static_cast<std::uint64_t>(fold));
  shuffle_in_place(rest, rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(validation_fraction * static_cast<double>(rest.size())));
  const std::set<std::string> val_songs(rest.begin(),
                                        rest.begin() + static_cast<std::ptrdiff_t>(n_val));

  FoldSplit split;
  for (const SegmentMeta& s : segments) {
    auto it = plan.assignments.find(s.song_id);
    if (it == plan.assignments.end())
      throw IntegrityError("split_fold: song '" + s.song_id + "' is not in the fold plan");
    if (it->second == fold)
      split.test.push_back(s.segment_id);
    else if (val_songs.count(s.song_id))
      split.val.push_back(s.segment_id);
    else
      split.train.push_back(s.segment_id);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string feature_file_name(const std::string& segment_id) {
  std::string out;
  for (char c : segment_id) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '_' || c == '.';
    out.push_back(safe ? c : '_');
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  // Distinct ids could collide after substitution; the hash keeps them apart.
  if (out != segment_id) out += "-" + detail::hex64(detail::fnv1a(segment_id)).substr(0, 8);
  return out + ".mel";
}

AudioFeatureProvider::AudioFeatureProvider(std::string base_dir, MelConfig mel,
                                           std::string cache_dir)
    : base_dir_(std::move(base_dir)), mel_(mel), cache_dir_(std::move(cache_dir)) {
  mel_.validate();
}

Waveform AudioFeatureProvider::segment_audio(const SegmentMeta& seg, bool use_stem) const {
  const std::optional<std::string>& ref = use_stem ? seg.stem_ref : seg.audio_ref;
  if (!ref)
    throw MissingFeatures("segment '" + seg.segment_id + "' has no " +
                          (use_stem ? "stem_ref" : "audio_ref"));
  const std::string path = resolve(base_dir_, *ref);
  try {
    const Waveform full = load_audio(path, mel_.sample_rate);
    return extract_segment(full, seg.start_time, seg.duration);
  } catch (const IoError& e) {
    throw MissingFeatures("segment '" + seg.segment_id + "': " + e.what());
  } catch (const OutOfRange& e) {
    throw MissingFeatures("segment '" + seg.segment_id + "': " + e.what());
  }
}

FeatureMatrix AudioFeatureProvider::features(const SegmentMeta& seg,
                                             const AugmentChoice& choice) const {
  if (!cache_dir_.empty() && choice == AugmentChoice{}) {
    const fs::path p = fs::path(cache_dir_) / feature_file_name(seg.segment_id);
    if (fs::exists(p)) return read_mel_cache(p.string());
  }
  try {
    return waveform_features(segment_audio(seg, choice.use_stem), choice, mel_);
  } catch (const TooShort& e) {
    throw MissingFeatures("segment '" + seg.segment_id + "': " + e.what());
  }
}

CachedFeatureProvider::CachedFeatureProvider(std::string dir) : dir_(std::move(dir)) {}

FeatureMatrix CachedFeatureProvider::features(const SegmentMeta& seg,
                                              const AugmentChoice&) const {
  const fs::path p = fs::path(dir_) / feature_file_name(seg.segment_id);
  if (!fs::exists(p))
    throw MissingFeatures("no cached features for segment '" + seg.segment_id + "' (" +
                          p.string() + ")");
  return read_mel_cache(p.string());
}

WaveformFeatureProvider::WaveformFeatureProvider(std::map<std::string, Waveform> audio,
                                                 MelConfig mel)
    : audio_(std::move(audio)), mel_(mel) {
  mel_.validate();
}

FeatureMatrix WaveformFeatureProvider::features(const SegmentMeta& seg,
                                                const AugmentChoice& choice) const {
  const std::optional<std::string>& ref = choice.use_stem ? seg.stem_ref : seg.audio_ref;
  auto it = ref ? audio_.find(*ref) : audio_.end();
  if (it == audio_.end())
    throw MissingFeatures("no waveform for segment '" + seg.segment_id + "'");
  return waveform_features(it->second, choice, mel_);
}

void TrainConfig::validate() const {
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("train: lr must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be positive");
  if (patience < 1) throw ConfigError("train: patience must be positive");
  if (patience > max_epochs) throw ConfigError("train: patience exceeds max_epochs");
  if (frozen_blocks < 0) throw ConfigError("train: frozen_blocks must be >= 0");
  if (folds < 2) throw ConfigError("train: folds must be at least 2");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("train: validation_fraction must lie in [0, 1)");
  if (threads < 1) throw ConfigError("train: threads must be positive");
  augment.validate();
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double mae(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw LengthMismatch("mae: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(target.size()) + " targets");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

MeanStd mean_and_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  for (double v : values) r.mean += v;
  r.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

void write_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "epoch,train_l1,val_l1,lr,wall_seconds\n";
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << detail::format_double(e.train_l1) << ','
       << (std::isnan(e.val_l1) ? std::string() : detail::format_double(e.val_l1)) << ','
       << detail::format_double(e.lr) << ',' << detail::format_double(e.wall_seconds) << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

namespace {

struct Sample {
  const SegmentMeta* seg = nullptr;
  float target = 0.0f;
};

// Inputs to the first trainable block, keyed by presentation. The frozen
// prefix never changes during a fold, so its output is computed once.
class PrefixCache {
 public:
  PrefixCache(const FeatureProvider& features, const Parameters<float>& params,
              const TdnnConfig& cfg, int start_block, std::size_t budget_bytes)
      : features_(features), params_(params), cfg_(cfg), start_(start_block),
        budget_(budget_bytes) {}

  Matrix<float> get(const SegmentMeta& seg, const AugmentChoice& choice) {
    Key key{seg.segment_id, choice.speed, choice.use_stem};
    {
      std::lock_guard lock(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    Matrix<float> x = features_.features(seg, choice);
    if (x.cols() != cfg_.input_channels())
      throw ShapeMismatch("segment '" + seg.segment_id + "': features have " +
                          std::to_string(x.cols()) + " bins, model expects " +
                          std::to_string(cfg_.input_channels()));
    if (start_ > 0) x = run_blocks(x, params_, cfg_, 0, start_);
    const std::size_t bytes = static_cast<std::size_t>(x.size()) * sizeof(float);
    std::lock_guard lock(mu_);
    if (used_ + bytes <= budget_ && map_.emplace(key, x).second) used_ += bytes;
    return x;
  }

 private:
  using Key = std::tuple<std::string, double, bool>;
  const FeatureProvider& features_;
  const Parameters<float>& params_;
  const TdnnConfig& cfg_;
  int start_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::map<Key, Matrix<float>> map_;
  std::mutex mu_;
};

std::uint64_t init_seed(std::uint64_t seed, int fold) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(fold + 1);
}

}  // namespace

FoldResult train_fold(const SurveyDataset& dataset, const std::vector<SegmentScore>& scores,
                      const FoldPlan& plan, int fold, const TdnnConfig& model_cfg,
                      const TrainConfig& train_cfg, const FeatureProvider& features,
                      const TrainOptions& options) {
  train_cfg.validate();
  TdnnConfig cfg = model_cfg;
  cfg.frozen_blocks = train_cfg.frozen_blocks;
  cfg.validate(false);
  const int start_block = cfg.frozen_blocks;

  std::map<std::string, double> target_of;
  for (const SegmentScore& s : scores) target_of[s.segment_id] = s.unit_score;

  const FoldSplit split = split_fold(plan, dataset.segments(), fold, train_cfg.validation_fraction);
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<Sample> out;
    for (const std::string& id : ids) {
      auto it = target_of.find(id);
      if (it == target_of.end()) continue;
      out.push_back({dataset.find_segment(id), static_cast<float>(it->second)});
    }
    return out;
  };
  const std::vector<Sample> train = collect(split.train);
  const std::vector<Sample> val = collect(split.val);
  const std::vector<Sample> test = collect(split.test);
  if (train.empty()) throw MissingFeatures("fold " + std::to_string(fold) + ": no scored training segments");
  if (test.empty()) throw MissingFeatures("fold " + std::to_string(fold) + ": no scored test segments");

  Parameters<float> params;
  if (options.initial_params) {
    params = *options.initial_params;
    params.check_shapes(cfg);
  } else {
    params = Parameters<float>::he_uniform(cfg, init_seed(train_cfg.seed, fold));
  }
  apply_freeze(params, cfg.frozen_blocks);
  // Frozen tensors never change, so the prefix can run on a snapshot.
  const Parameters<float> frozen_copy = params;
  PrefixCache cache(features, frozen_copy, cfg, start_block, train_cfg.prefix_cache_mb << 20);

  const bool augment = train_cfg.augment_enabled && features.supports_augmentation();
  const std::size_t B = static_cast<std::size_t>(train_cfg.batch_size);
  Adam adam(train_cfg.adam, params);
  std::vector<Parameters<float>> scratch(std::min(B, train.size()),
                                         Parameters<float>::zeros(cfg));
  Parameters<float> grads = Parameters<float>::zeros(cfg);

  auto evaluate = [&](const std::vector<Sample>& set, const Parameters<float>& p) {
    std::vector<double> pred(set.size());
    parallel_for(set.size(), train_cfg.threads, [&](std::size_t i) {
      const Matrix<float> x = cache.get(*set[i].seg, AugmentChoice{});
      pred[i] = forward(x, p, cfg, false, start_block).score;
    });
    return pred;
  };
  auto l1_on = [&](const std::vector<Sample>& set, const std::vector<double>& pred) {
    std::vector<double> t(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) t[i] = set[i].target;
    return mae(pred, t);
  };

  FoldResult result;
  Parameters<float> best = params;
  double best_metric = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto order_rng = rng_stream(train_cfg.seed, "order", static_cast<std::uint64_t>(fold));

  int epoch = 1;
  for (; epoch <= train_cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, order_rng);
    std::vector<double> sample_loss(train.size(), 0.0);

    for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
      const std::size_t nb = std::min(B, order.size() - b0);
      parallel_for(nb, train_cfg.threads, [&](std::size_t j) {
        const std::size_t idx = order[b0 + j];
        const Sample& s = train[idx];
        const AugmentChoice choice =
            augment ? draw_augmentation(*s.seg, train_cfg.augment, static_cast<std::uint64_t>(epoch))
                    : AugmentChoice{};
        const Matrix<float> x = cache.get(*s.seg, choice);
        const ForwardOutput<float> out = forward(x, params, cfg, true, start_block);
        const double diff = static_cast<double>(out.score) - s.target;
        sample_loss[idx] = std::abs(diff);
        const float sign = diff > 0 ? 1.0f : (diff < 0 ? -1.0f : 0.0f);
        scratch[j].set_zero();
        backward(out, sign / static_cast<float>(nb), params, cfg, scratch[j]);
      });
      for (std::size_t j = 0; j < nb; ++j) {
        if (!std::isfinite(sample_loss[order[b0 + j]]))
          throw NonFiniteLoss("fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) +
                              ": non-finite loss on segment '" +
                              train[order[b0 + j]].seg->segment_id + "'");
      }
      // Summed in batch position order so the update does not depend on
      // which worker finished first.
      grads.set_zero();
      for (std::size_t j = 0; j < nb; ++j) grads.add(scratch[j]);
      adam.step(params, grads);
      if (!params.all_finite())
        throw NonFiniteLoss("fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) +
                            ": parameters became non-finite");
    }

    EpochLog log;
    log.epoch = epoch;
    double sum = 0.0;
    for (double v : sample_loss) sum += v;
    log.train_l1 = sum / static_cast<double>(train.size());
    log.val_l1 = val.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : l1_on(val, evaluate(val, params));
    log.lr = train_cfg.adam.lr;
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(log.train_l1) || (!val.empty() && !std::isfinite(log.val_l1)))
      throw NonFiniteLoss("fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) +
                          ": non-finite epoch loss");
    result.log.push_back(log);
    if (options.on_epoch) options.on_epoch(log);

    const double metric = val.empty() ? log.train_l1 : log.val_l1;
    if (metric < best_metric) {
      best_metric = metric;
      best = params;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= train_cfg.patience) {
      break;
    }
  }

  const std::vector<double> test_pred = evaluate(test, best);
  std::vector<double> targets(test.size());
  std::vector<double> half(test.size(), 0.5);
  for (std::size_t i = 0; i < test.size(); ++i) {
    targets[i] = test[i].target;
    result.test_predictions.emplace_back(test[i].seg->segment_id, test_pred[i]);
  }

  FoldMetrics& m = result.metrics;
  m.fold = fold;
  m.test_mae = mae(test_pred, targets);
  m.baseline_mae = mae(half, targets);
  m.n_train = static_cast<int>(train.size());
  m.n_val = static_cast<int>(val.size());
  m.n_test = static_cast<int>(test.size());
  m.epochs_run = static_cast<int>(result.log.size());
  m.best_epoch = best_epoch;
  m.best_val_l1 = best_metric;

  result.checkpoint.config = cfg;
  result.checkpoint.params = std::move(best);
  result.checkpoint.meta.seed = train_cfg.seed;
  result.checkpoint.meta.epoch = best_epoch;
  result.checkpoint.meta.fold = fold;
  result.checkpoint.meta.train_config_json = to_json_text(train_cfg);
  return result;
}

CrossValidationSummary cross_validate(const SurveyDataset& dataset,
                                      const std::vector<SegmentScore>& scores,
                                      const TdnnConfig& model_cfg, const TrainConfig& train_cfg,
                                      const FeatureProvider& features,
                                      const std::function<void(const FoldResult&)>& on_fold,
                                      const std::function<void(int, const EpochLog&)>& on_epoch) {
  train_cfg.validate();
  std::vector<std::string> songs;
  for (const SegmentMeta& s : dataset.segments()) songs.push_back(s.song_id);
  const FoldPlan plan = make_folds(songs, train_cfg.folds, train_cfg.seed);

  CrossValidationSummary summary;
  std::vector<double> maes, baselines;
  for (int f = 0; f < plan.k; ++f) {
    TrainOptions opts;
    if (on_epoch) opts.on_epoch = [&on_epoch, f](const EpochLog& e) { on_epoch(f, e); };
    FoldResult r = train_fold(dataset, scores, plan, f, model_cfg, train_cfg, features, opts);
    summary.folds.push_back(r.metrics);
    maes.push_back(r.metrics.test_mae);
    baselines.push_back(r.metrics.baseline_mae);
    if (on_fold) on_fold(r);
  }
  summary.mae = mean_and_std(maes);
  summary.baseline = mean_and_std(baselines);
  return summary;
}

}  // namespace psvf
