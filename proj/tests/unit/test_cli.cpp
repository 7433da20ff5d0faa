#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <psvf/analytics.hpp>
#include <psvf/audio.hpp>
#include <psvf/checkpoint.hpp>
#include <psvf/dataset.hpp>

#include "oracle.hpp"

using namespace psvf;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr goes to a file next to the scratch
// dir so stdout stays machine-readable.
CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(PSVF_CLI_PATH) + "' " + args + " 2>>" +
                          (fs::temp_directory_path() / "psvf_test_cli.stderr").string();
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("psvf_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, Version) {
  const CliRun r = run("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("psvf ", 0), 0u);
}

TEST_F(Cli, MissingFileExitsWithTwo) {
  EXPECT_EQ(run("analyze --data-dir " + q(dir_ / "nothing_here") + " -o " + q(dir_ / "o")).code, 2);
  EXPECT_EQ(run("report --analytics " + q(dir_ / "none.json")).code, 2);
}

TEST_F(Cli, UsageErrorsAreNonZero) {
  EXPECT_NE(run("").code, 0);
  EXPECT_NE(run("frobnicate").code, 0);
}

TEST_F(Cli, IngestPrintsCounts) {
  const SurveyDataset raw = oracle::random_survey(3, 10, 12);
  write_canonical(raw, (dir_ / "data").string());
  const CliRun r = run("ingest --data-dir " + q(dir_ / "data") + " -o " + q(dir_ / "out"));
  ASSERT_EQ(r.code, 0);
  const SurveyDataset f = filter_valid(raw);
  EXPECT_NE(r.out.find("segments: " + std::to_string(raw.segments().size())), std::string::npos);
  EXPECT_NE(r.out.find("participants: " + std::to_string(f.participants().size()) +
                       ", responses: " + std::to_string(f.responses().size())),
            std::string::npos);
  EXPECT_EQ(ingest(DatasetPaths::in_directory((dir_ / "out").string())), raw);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "run_config.json"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "VERSION"));
}

TEST_F(Cli, AnalyzeJsonMatchesLibraryAndReportRerenders) {
  const SurveyDataset raw = oracle::random_survey(4, 30, 40);
  write_canonical(raw, (dir_ / "data").string());
  const CliRun r = run("analyze --format json --data-dir " + q(dir_ / "data") + " -o " + q(dir_ / "o"));
  ASSERT_EQ(r.code, 0);
  const AnalyticsReport want = build_report(filter_valid(raw), ReportRequest::standard());
  const AnalyticsReport got = report_from_json(r.out);
  EXPECT_EQ(got.ac_tables, want.ac_tables);
  EXPECT_EQ(got.unsure, want.unsure);
  const CliRun md = run("report --format md --analytics " + q(dir_ / "o" / "report.json"));
  ASSERT_EQ(md.code, 0);
  EXPECT_EQ(md.out, slurp(dir_ / "o" / "report.md"));
}

TEST_F(Cli, AnalyzeSelectedDims) {
  write_canonical(oracle::random_survey(5, 30, 40), (dir_ / "data").string());
  const CliRun r = run("analyze --dims gender sex --data-dir " + q(dir_ / "data") + " -o " + q(dir_ / "o"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("AC female singers"), std::string::npos);
  EXPECT_EQ(r.out.find("tracks"), std::string::npos);
  EXPECT_NE(run("analyze --dims gender --data-dir " + q(dir_ / "data")).code, 0);
  EXPECT_NE(run("analyze --format pdf --data-dir " + q(dir_ / "data")).code, 0);
}

TEST_F(Cli, AnalyzeCellAndEmptySubgroup) {
  // Only female singers.
  SegmentMeta s;
  s.segment_id = "a";
  s.song_id = "x";
  ParticipantMeta p;
  p.participant_id = "u";
  p.gender = Gender::male;
  write_canonical(SurveyDataset({s}, {p}, {{"u", "a", 1, false}}), (dir_ / "data").string());
  const std::string data = " --data-dir " + q(dir_ / "data") + " -o " + q(dir_ / "o");
  const CliRun ok = run("analyze --cell gender=male sex=female" + data);
  ASSERT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("100.0"), std::string::npos);
  const CliRun empty = run("analyze --cell gender=male sex=male" + data);
  EXPECT_NE(empty.code, 0);
}

TEST_F(Cli, ConfigFromEnvironment) {
  write_canonical(oracle::random_survey(6, 10, 10), (dir_ / "data").string());
  std::ofstream(dir_ / "run.json") << R"({"data_dir": "data", "output_dir": "envout"})";
  const CliRun r = run("analyze --format csv", "PSVF_CONFIG=" + q(dir_ / "run.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "envout" / "report.csv"));
  std::ofstream(dir_ / "bad.json") << R"({"data_dir": "data", "colour": 1})";
  EXPECT_EQ(run("analyze", "PSVF_CONFIG=" + q(dir_ / "bad.json")).code, 1);
}

TEST_F(Cli, PredictTenFiles) {
  Checkpoint ck;
  ck.params = Parameters<float>::he_uniform(ck.config, 1);
  apply_freeze(ck.params, ck.config.frozen_blocks);
  save_checkpoint(ck, (dir_ / "m.ckpt").string());
  fs::create_directories(dir_ / "wav");
  for (int i = 0; i < 10; ++i) {
    Waveform w;
    w.samples.resize(16000 * (1 + i % 4));
    for (std::size_t k = 0; k < w.samples.size(); ++k)
      w.samples[k] = static_cast<float>(0.3 * std::sin(0.05 * (i + 1) * k) * std::sin(0.0007 * k));
    write_wav((dir_ / "wav" / ("f" + std::to_string(i) + ".wav")).string(), w);
  }
  const CliRun r = run("predict --checkpoint " + q(dir_ / "m.ckpt") + " --in " + q(dir_ / "wav") +
                    " --embedding -o " + q(dir_ / "o"));
  ASSERT_EQ(r.code, 0);
  const std::string csv = slurp(dir_ / "o" / "predictions.csv");
  EXPECT_EQ(count_lines(csv), 11);
  EXPECT_EQ(csv.rfind("path,score,n_windows,emb_0,", 0), 0u);
  EXPECT_EQ(run("predict --checkpoint " + q(dir_ / "none.ckpt") + " --in " + q(dir_ / "wav")).code, 2);
}

TEST_F(Cli, SynthThenTrainWithoutValidation) {
  ASSERT_EQ(run("synth --songs 10 -o " + q(dir_ / "syn")).code, 0);
  const CliRun r = run("train --data-dir " + q(dir_ / "syn") +
                    " --fold 0 --max-epochs 2 --patience 1 --no-augment --validation-fraction 0"
                    " --seed 3 -o " + q(dir_ / "tr"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "tr" / "fold0.ckpt"));
  const std::string log = slurp(dir_ / "tr" / "fold0_log.csv");
  EXPECT_EQ(log.rfind("epoch,train_l1,val_l1,lr,wall_seconds\n", 0), 0u);
  EXPECT_NE(log.find("\n1,"), std::string::npos);
  EXPECT_NE(log.find(",,"), std::string::npos);  // empty val_l1
  const std::string summary = slurp(dir_ / "tr" / "summary.json");
  EXPECT_NE(summary.find("\"psvf.train_summary/1\""), std::string::npos);
  EXPECT_NE(summary.find("\"n_val\": 0"), std::string::npos);
  EXPECT_NE(summary.find("\"n_test\": 12"), std::string::npos);
  const Checkpoint ck = load_checkpoint((dir_ / "tr" / "fold0.ckpt").string());
  EXPECT_EQ(ck.meta.seed, 3u);
  EXPECT_EQ(ck.meta.fold, 0);
  const CliRun rep = run("report --format csv --summary " + q(dir_ / "tr" / "summary.json"));
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(rep.out.rfind("fold,test_mae,", 0), 0u);
}
