#pragma once

#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace psvf::cli {

struct AnalyzeArgs {
  std::vector<std::string> dims;  // participant dim, singer dim, repeated
  std::string format = "md";      // printed to stdout
  std::vector<std::string> cell;  // explicit subgroup: participant value, singer value
};

struct TrainArgs {
  std::optional<int> only_fold;
  std::string init_checkpoint;
};

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out;  // defaults to <output_dir>/predictions.csv
  bool embedding = false;
  double window_seconds = 3.0;
  double hop_seconds = 1.5;
};

struct ReportArgs {
  std::string analytics_json;
  std::string train_summary;
  std::string format = "md";
};

struct SynthArgs {
  int songs = 200;
  double noise = 0.05;
};

// Each returns the process exit code and writes diagnostics to stderr.
int cmd_ingest(const RunConfig& cfg);
int cmd_analyze(const RunConfig& cfg, const AnalyzeArgs& args);
int cmd_featurize(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg, const TrainArgs& args);
int cmd_predict(const RunConfig& cfg, const PredictArgs& args);
int cmd_report(const ReportArgs& args);
int cmd_synth(const RunConfig& cfg, const SynthArgs& args);

}  // namespace psvf::cli
