#include <cstdlib>
#include <iostream>
#include <optional>

#include <psvf/error.hpp>

#include "CLI11.hpp"
#include "commands.hpp"
#include "run_config.hpp"

using namespace psvf;
using namespace psvf::cli;

namespace {

// Flags that override config fields; unset ones leave the config alone.
struct Overrides {
  std::optional<std::string> data_dir, segments, participants, responses, column_map, audio_dir,
      features_dir, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, folds, max_epochs, patience, batch_size, frozen_blocks;
  std::optional<double> validation_fraction, lr;
  bool no_augment = false;
  bool no_filter = false;
  bool zero_mean_aligns = false;
  bool unsure_inclusive = false;

  void apply(RunConfig& c) const {
    if (data_dir) c.data_dir = *data_dir;
    if (segments) c.segments_csv = *segments;
    if (participants) c.participants_csv = *participants;
    if (responses) c.responses_csv = *responses;
    if (column_map) c.column_map = *column_map;
    if (audio_dir) c.audio_dir = *audio_dir;
    if (features_dir) c.features_dir = *features_dir;
    if (output_dir) c.output_dir = *output_dir;
    if (seed) c.seed = *seed;
    if (threads) c.train.threads = *threads;
    if (folds) c.train.folds = *folds;
    if (max_epochs) c.train.max_epochs = *max_epochs;
    if (patience) c.train.patience = *patience;
    if (batch_size) c.train.batch_size = *batch_size;
    if (frozen_blocks) c.train.frozen_blocks = *frozen_blocks;
    if (validation_fraction) c.train.validation_fraction = *validation_fraction;
    if (lr) c.train.adam.lr = *lr;
    if (no_augment) c.train.augment_enabled = false;
    if (no_filter) c.filter = false;
    if (zero_mean_aligns) c.analytics.zero_mean_aligns = true;
    if (unsure_inclusive) c.analytics.unsure_inclusive = true;
    propagate_seed(c);
  }
};

void add_data_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--data-dir", o.data_dir, "Directory with segments.csv, participants.csv, responses.csv");
  sub->add_option("--segments", o.segments, "Segments table");
  sub->add_option("--participants", o.participants, "Participants table");
  sub->add_option("--responses", o.responses, "Responses table");
  sub->add_option("--column-map", o.column_map, "Column mapping file (table.field = column)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perceived singing-voice femininity toolkit"};
  app.set_version_flag("--version", std::string("psvf ") + PSVF_VERSION);
  app.require_subcommand(1);
  // Global options are also accepted after the subcommand name.
  app.fallthrough();

  std::string config_path;
  if (const char* env = std::getenv(kConfigEnv)) config_path = env;
  Overrides o;
  app.add_option("-c,--config", config_path,
                 std::string("Run config JSON (default: $") + kConfigEnv + ")");
  app.add_option("-o,--out", o.output_dir, "Output directory");
  app.add_option("--seed", o.seed, "Seed for init, folds, batch order and augmentation");
  app.add_option("--threads", o.threads, "Worker threads (1 = deterministic reference)")
      ->check(CLI::PositiveNumber);

  auto* ingest = app.add_subcommand("ingest", "Read survey tables and write the canonical dataset");
  add_data_options(ingest, o);

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Average correspondence and Unsure tables");
  add_data_options(analyze, o);
  analyze->add_option("--dims", analyze_args.dims,
                      "Pairs of participant and singer dimensions, e.g. gender sex");
  analyze->add_option("--format", analyze_args.format, "Printed format: md, json or csv");
  analyze->add_option("--cell", analyze_args.cell,
                      "One explicit subgroup, e.g. language=fr language=man")
      ->expected(2);
  analyze->add_flag("--zero-mean-aligns", o.zero_mean_aligns,
                    "Count a zero mean rating as matching either sex");
  analyze->add_flag("--unsure-inclusive", o.unsure_inclusive, "Use |mean| <= 0.5 for Unsure");
  analyze->add_flag("--no-filter", o.no_filter, "Skip the validity filter");

  auto* featurize = app.add_subcommand("featurize", "Compute and cache log-mel features");
  add_data_options(featurize, o);
  featurize->add_option("--audio-dir", o.audio_dir, "Base directory for audio references");
  featurize->add_option("--features-dir", o.features_dir, "Feature cache directory");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Song-grouped cross-validated training");
  add_data_options(train, o);
  train->add_option("--audio-dir", o.audio_dir, "Base directory for audio references");
  train->add_option("--features-dir", o.features_dir, "Feature cache directory");
  train->add_option("--folds", o.folds, "Number of folds");
  train->add_option("--fold", train_args.only_fold, "Train only this fold");
  train->add_option("--validation-fraction", o.validation_fraction,
                    "Share of training songs held out for early stopping");
  train->add_option("--max-epochs", o.max_epochs, "Epoch limit");
  train->add_option("--patience", o.patience, "Early-stopping patience in epochs");
  train->add_option("--batch-size", o.batch_size, "Minibatch size");
  train->add_option("--lr", o.lr, "Adam learning rate");
  train->add_option("--frozen-blocks", o.frozen_blocks, "Number of leading blocks kept fixed");
  train->add_option("--init", train_args.init_checkpoint, "Warm-start checkpoint");
  train->add_flag("--no-augment", o.no_augment, "Disable speed and stem augmentation");
  train->add_flag("--no-filter", o.no_filter, "Skip the validity filter");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Score audio files with a checkpoint");
  predict->add_option("--checkpoint", predict_args.checkpoint, "Checkpoint file")->required();
  predict->add_option("--in", predict_args.inputs, "WAV files or directories")->required();
  predict->add_option("--csv", predict_args.out, "Output CSV (default <out>/predictions.csv)");
  predict->add_flag("--embedding", predict_args.embedding, "Include the 64-dim embedding");
  predict->add_option("--window", predict_args.window_seconds, "Window length in seconds");
  predict->add_option("--hop", predict_args.hop_seconds, "Window hop in seconds");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Re-render a saved analytics report or training summary");
  report->add_option("--analytics", report_args.analytics_json, "report.json from analyze");
  report->add_option("--summary", report_args.train_summary, "summary.json from train");
  report->add_option("--format", report_args.format, "md, json or csv");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write the synthetic tone corpus");
  synth->add_option("--songs", synth_args.songs, "Number of songs");
  synth->add_option("--noise", synth_args.noise, "Noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    o.apply(cfg);

    if (ingest->parsed()) return cmd_ingest(cfg);
    if (analyze->parsed()) return cmd_analyze(cfg, analyze_args);
    if (featurize->parsed()) return cmd_featurize(cfg);
    if (train->parsed()) return cmd_train(cfg, train_args);
    if (predict->parsed()) return cmd_predict(cfg, predict_args);
    if (report->parsed()) return cmd_report(report_args);
    if (synth->parsed()) return cmd_synth(cfg, synth_args);
  } catch (const IoError& e) {
    std::cerr << "psvf: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "psvf: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
