#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <psvf/analytics.hpp>
#include <psvf/audio.hpp>
#include <psvf/checkpoint.hpp>
#include <psvf/csv.hpp>
#include <psvf/config_io.hpp>
#include <psvf/dataset.hpp>
#include <psvf/error.hpp>
#include <psvf/mel.hpp>
#include <psvf/synth.hpp>
#include <psvf/train.hpp>

#include "json.hpp"

namespace psvf::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

DatasetPaths dataset_paths(const RunConfig& cfg) {
  if (!cfg.segments_csv.empty() || !cfg.participants_csv.empty() || !cfg.responses_csv.empty()) {
    if (cfg.segments_csv.empty() || cfg.participants_csv.empty() || cfg.responses_csv.empty())
      throw ConfigError("--segments, --participants and --responses must be given together");
    return {cfg.segments_csv, cfg.participants_csv, cfg.responses_csv};
  }
  if (cfg.data_dir.empty()) throw ConfigError("no dataset given (--data-dir or data_dir)");
  return DatasetPaths::in_directory(cfg.data_dir);
}

SurveyDataset load_raw(const RunConfig& cfg) {
  const DatasetPaths paths = dataset_paths(cfg);
  for (const std::string* p : {&paths.segments, &paths.participants, &paths.responses})
    if (!fs::exists(*p)) throw IoError("no such file: " + *p);
  ColumnMap columns;
  if (!cfg.column_map.empty()) columns = ColumnMap::load(cfg.column_map);
  return ingest(paths, columns);
}

SurveyDataset load_for_use(const RunConfig& cfg) {
  SurveyDataset raw = load_raw(cfg);
  return cfg.filter ? filter_valid(raw) : raw;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string audio_base(const RunConfig& cfg) {
  return cfg.audio_dir.empty() ? cfg.data_dir : cfg.audio_dir;
}

ParticipantValue parse_participant_value(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("--cell expects dim=value, got '" + text + "'");
  const auto dim = parse_participant_dim(text.substr(0, eq));
  const std::string v = text.substr(eq + 1);
  if (!dim) throw ConfigError("unknown participant dimension in '" + text + "'");
  switch (*dim) {
    case ParticipantDim::gender:
      if (auto g = parse_gender(v)) return *g;
      break;
    case ParticipantDim::age_group:
      if (auto a = parse_participant_age(v)) return *a;
      break;
    case ParticipantDim::language:
      if (auto l = parse_language(v)) return *l;
      break;
  }
  throw ConfigError("unknown participant value in '" + text + "'");
}

SingerValue parse_singer_value(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("--cell expects dim=value, got '" + text + "'");
  const auto dim = parse_singer_dim(text.substr(0, eq));
  const std::string v = text.substr(eq + 1);
  if (!dim) throw ConfigError("unknown singer dimension in '" + text + "'");
  switch (*dim) {
    case SingerDim::sex:
      if (auto s = parse_sex(v)) return *s;
      break;
    case SingerDim::age_group:
      if (auto a = parse_singer_age(v)) return *a;
      break;
    case SingerDim::language:
      if (auto l = parse_language(v)) return *l;
      break;
  }
  throw ConfigError("unknown singer value in '" + text + "'");
}

}  // namespace

int cmd_ingest(const RunConfig& cfg) {
  const SurveyDataset raw = load_raw(cfg);
  const SurveyDataset valid = filter_valid(raw);
  stamp_output_dir(cfg.output_dir, cfg);
  write_canonical(raw, cfg.output_dir);
  std::cout << "segments: " << raw.segments().size() << "\n"
            << "before filter: participants: " << raw.participants().size()
            << ", responses: " << raw.responses().size() << "\n"
            << "participants: " << valid.participants().size()
            << ", responses: " << valid.responses().size() << "\n";
  std::cerr << "canonical dataset written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_analyze(const RunConfig& cfg, const AnalyzeArgs& args) {
  const auto format = parse_report_format(args.format);
  if (!format) throw UnsupportedFormat("unknown report format '" + args.format + "'");
  const SurveyDataset data = load_for_use(cfg);

  if (!args.cell.empty()) {
    if (args.cell.size() != 2) throw ConfigError("--cell takes a participant and a singer value");
    const SubgroupKey key{parse_participant_value(args.cell[0]), parse_singer_value(args.cell[1])};
    const ACResult r = average_correspondence(data, key, cfg.analytics);
    std::cout << "AC " << args.cell[0] << " x " << args.cell[1] << ": "
              << format_percent(*r.ac_percent) << " (" << r.aligned << "/" << r.n_segments
              << " segments)\n";
    return 0;
  }

  ReportRequest request = ReportRequest::standard();
  if (!args.dims.empty()) {
    if (args.dims.size() % 2 != 0)
      throw ConfigError("--dims takes pairs of participant and singer dimensions");
    request.tables.clear();
    request.unsure_dims.clear();
    for (std::size_t i = 0; i < args.dims.size(); i += 2) {
      const auto pd = parse_participant_dim(args.dims[i]);
      const auto sd = parse_singer_dim(args.dims[i + 1]);
      if (!pd) throw ConfigError("unknown participant dimension '" + args.dims[i] + "'");
      if (!sd) throw ConfigError("unknown singer dimension '" + args.dims[i + 1] + "'");
      request.tables.emplace_back(*pd, *sd);
      if (std::find(request.unsure_dims.begin(), request.unsure_dims.end(), *sd) ==
          request.unsure_dims.end())
        request.unsure_dims.push_back(*sd);
    }
  }
  const AnalyticsReport report =
      build_report(data, request, cfg.analytics, cfg.filter ? "filter_valid" : "none");

  stamp_output_dir(cfg.output_dir, cfg);
  const fs::path out(cfg.output_dir);
  write_text(out / "report.md", render_report(report, ReportFormat::markdown));
  write_text(out / "report.json", render_report(report, ReportFormat::json));
  write_text(out / "report.csv", render_report(report, ReportFormat::csv));
  std::cout << render_report(report, *format);
  std::cerr << "report written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_featurize(const RunConfig& cfg) {
  const SurveyDataset data = load_raw(cfg);
  const std::string dir =
      cfg.features_dir.empty() ? (fs::path(cfg.output_dir) / "features").string() : cfg.features_dir;
  stamp_output_dir(dir, cfg);
  const AudioFeatureProvider provider(audio_base(cfg), cfg.mel);
  const auto& segs = data.segments();
  std::vector<int> ok(segs.size(), 0);
  std::vector<std::string> errors(segs.size());
  parallel_for(segs.size(), cfg.train.threads, [&](std::size_t i) {
    try {
      const FeatureMatrix m = provider.features(segs[i], AugmentChoice{});
      write_mel_cache((fs::path(dir) / feature_file_name(segs[i].segment_id)).string(), m);
      ok[i] = 1;
    } catch (const MissingFeatures& e) {
      errors[i] = e.what();
    }
  });
  std::size_t n_ok = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (ok[i])
      ++n_ok;
    else
      std::cerr << "skipped: " << errors[i] << "\n";
  }
  std::cerr << "featurized " << n_ok << " of " << segs.size() << " segments into " << dir << "\n";
  return n_ok == segs.size() ? 0 : 1;
}

int cmd_train(const RunConfig& cfg, const TrainArgs& args) {
  cfg.train.validate();
  const SurveyDataset data = load_for_use(cfg);
  const std::vector<SegmentScore> scores = all_scores(data);

  std::unique_ptr<FeatureProvider> provider;
  if (cfg.audio_dir.empty() && !cfg.features_dir.empty())
    provider = std::make_unique<CachedFeatureProvider>(cfg.features_dir);
  else
    provider = std::make_unique<AudioFeatureProvider>(audio_base(cfg), cfg.mel, cfg.features_dir);
  if (cfg.train.augment_enabled && !provider->supports_augmentation())
    std::cerr << "note: cached features carry no augmentation; training without it\n";

  TrainOptions base_opts;
  if (!args.init_checkpoint.empty()) {
    const Checkpoint init = load_checkpoint(args.init_checkpoint, &cfg.model);
    base_opts.initial_params = init.params;
  }

  stamp_output_dir(cfg.output_dir, cfg);
  const fs::path out(cfg.output_dir);
  std::vector<std::string> songs;
  for (const SegmentMeta& s : data.segments()) songs.push_back(s.song_id);
  const FoldPlan plan = make_folds(songs, cfg.train.folds, cfg.train.seed);

  ordered_json folds = ordered_json::array();
  std::vector<double> maes, baselines;
  for (int f = 0; f < plan.k; ++f) {
    if (args.only_fold && *args.only_fold != f) continue;
    const FoldSplit split = split_fold(plan, data.segments(), f, cfg.train.validation_fraction);
    std::cerr << "fold " << f << ": train " << split.train.size() << ", val " << split.val.size()
              << ", test " << split.test.size() << " segments\n";
    TrainOptions opts = base_opts;
    opts.on_epoch = [f](const EpochLog& e) {
      std::cerr << "fold " << f << " epoch " << e.epoch << ": train_l1 " << e.train_l1
                << ", val_l1 " << e.val_l1 << " (" << e.wall_seconds << " s)\n";
    };
    const FoldResult r = train_fold(data, scores, plan, f, cfg.model, cfg.train, *provider, opts);
    const std::string stem = "fold" + std::to_string(f);
    save_checkpoint(r.checkpoint, (out / (stem + ".ckpt")).string());
    write_training_log((out / (stem + "_log.csv")).string(), r.log);
    {
      std::ofstream os(out / (stem + "_test_predictions.csv"), std::ios::binary);
      if (!os) throw IoError("cannot write " + (out / (stem + "_test_predictions.csv")).string());
      csv::write_row(os, {"segment_id", "prediction", "target"});
      std::map<std::string, double> target;
      for (const SegmentScore& s : scores) target[s.segment_id] = s.unit_score;
      for (const auto& [id, p] : r.test_predictions) csv::write_row(os, {id, num(p), num(target[id])});
    }
    const FoldMetrics& m = r.metrics;
    std::cerr << "fold " << f << ": test MAE " << m.test_mae << " (constant 0.5: "
              << m.baseline_mae << "), best epoch " << m.best_epoch << " of " << m.epochs_run
              << "\n";
    folds.push_back({{"fold", m.fold},
                     {"test_mae", m.test_mae},
                     {"baseline_mae", m.baseline_mae},
                     {"n_train", m.n_train},
                     {"n_val", m.n_val},
                     {"n_test", m.n_test},
                     {"epochs_run", m.epochs_run},
                     {"best_epoch", m.best_epoch},
                     {"best_val_l1", m.best_val_l1}});
    maes.push_back(m.test_mae);
    baselines.push_back(m.baseline_mae);
  }

  const MeanStd mae = mean_and_std(maes);
  const MeanStd base = mean_and_std(baselines);
  ordered_json summary;
  summary["schema"] = "psvf.train_summary/1";
  summary["version"] = PSVF_VERSION;
  summary["seed"] = cfg.seed;
  summary["config_hash"] = config_hash(cfg);
  summary["folds"] = folds;
  summary["mae"] = {{"mean", mae.mean}, {"std", mae.std}};
  summary["baseline_mae"] = {{"mean", base.mean}, {"std", base.std}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "mean test MAE " << mae.mean << " +/- " << mae.std << " over " << maes.size()
            << " folds (constant 0.5: " << base.mean << ")\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, const PredictArgs& args) {
  if (args.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (!fs::exists(args.checkpoint)) throw IoError("no such file: " + args.checkpoint);
  if (!(args.window_seconds > 0.0) || !(args.hop_seconds > 0.0))
    throw ConfigError("window and hop must be positive");
  const Checkpoint ck = load_checkpoint(args.checkpoint);

  std::vector<std::string> files;
  for (const std::string& in : args.inputs) {
    if (!fs::exists(in)) throw IoError("no such file: " + in);
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        std::string ext = e.path().extension().string();
        for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (e.is_regular_file() && ext == ".wav") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw ConfigError("predict: no .wav files in the given inputs");

  struct FileResult {
    double mean = 0.0;
    Vector<double> embedding;
    std::vector<std::pair<double, double>> windows;  // (start s, score)
  };
  std::vector<FileResult> results(files.size());
  parallel_for(files.size(), cfg.train.threads, [&](std::size_t i) {
    const Waveform w = load_audio(files[i], cfg.mel.sample_rate);
    const double dur = w.duration();
    std::vector<double> starts;
    if (dur <= args.window_seconds) {
      starts.push_back(0.0);
    } else {
      for (double s = 0.0; s + args.window_seconds <= dur + 1e-9; s += args.hop_seconds)
        starts.push_back(s);
    }
    FileResult& r = results[i];
    r.embedding = Vector<double>::Zero(ck.config.embed_dim);
    for (double s : starts) {
      const Waveform seg =
          dur <= args.window_seconds ? w : extract_segment(w, s, args.window_seconds);
      const FeatureMatrix mel = melspectrogram(seg, cfg.mel).matrix;
      const ForwardOutput<float> o = forward(Matrix<float>(mel), ck.params, ck.config);
      r.windows.emplace_back(s, o.score);
      r.mean += o.score;
      r.embedding += o.embedding.cast<double>();
    }
    r.mean /= static_cast<double>(starts.size());
    r.embedding /= static_cast<double>(starts.size());
  });

  const std::string out =
      args.out.empty() ? (fs::path(cfg.output_dir) / "predictions.csv").string() : args.out;
  const fs::path out_dir = fs::path(out).parent_path();
  stamp_output_dir(out_dir.empty() ? "." : out_dir.string(), cfg);
  {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw IoError("cannot write " + out);
    std::vector<std::string> header{"path", "score", "n_windows"};
    if (args.embedding)
      for (int k = 0; k < ck.config.embed_dim; ++k) header.push_back("emb_" + std::to_string(k));
    csv::write_row(os, header);
    for (std::size_t i = 0; i < files.size(); ++i) {
      std::vector<std::string> row{files[i], num(results[i].mean),
                                   std::to_string(results[i].windows.size())};
      if (args.embedding)
        for (Eigen::Index k = 0; k < results[i].embedding.size(); ++k)
          row.push_back(num(results[i].embedding[k]));
      csv::write_row(os, row);
    }
  }
  // Windowed scoring of arbitrary-length audio goes beyond the fixed
  // 3-second segments the model was trained on; the file says so.
  const std::string windows_path =
      (fs::path(out).parent_path() / (fs::path(out).stem().string() + "_windows.csv")).string();
  {
    std::ofstream os(windows_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + windows_path);
    csv::write_row(os, {"path", "window", "start_s", "end_s", "score", "mode"});
    for (std::size_t i = 0; i < files.size(); ++i) {
      for (std::size_t k = 0; k < results[i].windows.size(); ++k) {
        const auto [s, score] = results[i].windows[k];
        csv::write_row(os, {files[i], std::to_string(k), num(s), num(s + args.window_seconds),
                            num(score), "extension:windowed"});
      }
    }
  }
  std::cerr << "scored " << files.size() << " files -> " << out << " (per-window: "
            << windows_path << ")\n";
  return 0;
}

int cmd_report(const ReportArgs& args) {
  if (args.analytics_json.empty() && args.train_summary.empty())
    throw ConfigError("report needs --analytics and/or --summary");
  if (!args.analytics_json.empty()) {
    if (!fs::exists(args.analytics_json)) throw IoError("no such file: " + args.analytics_json);
    const AnalyticsReport r = report_from_json(read_text(args.analytics_json));
    std::cout << render_report(r, args.format);
  }
  if (!args.train_summary.empty()) {
    if (!fs::exists(args.train_summary)) throw IoError("no such file: " + args.train_summary);
    ordered_json s;
    try {
      s = ordered_json::parse(read_text(args.train_summary));
    } catch (const ordered_json::exception& e) {
      throw ConfigError(args.train_summary + ": invalid JSON (" + e.what() + ")");
    }
    auto f4 = [](double v) {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", v);
      return std::string(b);
    };
    if (args.format == "csv") {
      csv::write_row(std::cout, {"fold", "test_mae", "baseline_mae", "n_train", "n_val", "n_test",
                                 "epochs_run", "best_epoch"});
      for (const auto& f : s.at("folds"))
        csv::write_row(std::cout,
                       {f.at("fold").dump(), num(f.at("test_mae").get<double>()),
                        num(f.at("baseline_mae").get<double>()), f.at("n_train").dump(),
                        f.at("n_val").dump(), f.at("n_test").dump(), f.at("epochs_run").dump(),
                        f.at("best_epoch").dump()});
    } else {
      std::cout << "| fold | test MAE | constant 0.5 | train | val | test | epochs | best |\n"
                << "|---|---|---|---|---|---|---|---|\n";
      for (const auto& f : s.at("folds"))
        std::cout << "| " << f.at("fold").dump() << " | " << f4(f.at("test_mae").get<double>())
                  << " | " << f4(f.at("baseline_mae").get<double>()) << " | "
                  << f.at("n_train").dump() << " | " << f.at("n_val").dump() << " | "
                  << f.at("n_test").dump() << " | " << f.at("epochs_run").dump() << " | "
                  << f.at("best_epoch").dump() << " |\n";
      std::cout << "\nmean MAE " << f4(s.at("mae").at("mean").get<double>()) << " +/- "
                << f4(s.at("mae").at("std").get<double>()) << " (seed "
                << s.at("seed").dump() << ", config " << s.at("config_hash").get<std::string>()
                << ")\n";
    }
  }
  return 0;
}

int cmd_synth(const RunConfig& cfg, const SynthArgs& args) {
  SynthSpec spec;
  spec.n_songs = args.songs;
  spec.noise_std = args.noise;
  spec.seed = cfg.seed;
  spec.sample_rate = cfg.mel.sample_rate;
  const SynthCorpus corpus = make_synthetic_corpus(spec);
  write_synthetic_corpus(corpus, cfg.output_dir);
  stamp_output_dir(cfg.output_dir, cfg);
  std::cerr << "wrote " << corpus.dataset.segments().size() << " segments to " << cfg.output_dir
            << "\n";
  return 0;
}

}  // namespace psvf::cli
