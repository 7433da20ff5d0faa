#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include <psvf/audio.hpp>
#include <psvf/augment.hpp>
#include <psvf/mel.hpp>
#include <psvf/model.hpp>

using namespace psvf;

namespace {

Waveform noise_segment(double seconds) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.f, 0.1f);
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (float& s : w.samples) s = n(rng);
  return w;
}

Matrix<float> features(int frames) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.f, 1.f);
  Matrix<float> x(frames, kMelBins);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

void BM_Melspectrogram3s(benchmark::State& st) {
  const Waveform w = noise_segment(3.0);
  for (auto _ : st) benchmark::DoNotOptimize(melspectrogram(w));
}
BENCHMARK(BM_Melspectrogram3s)->Unit(benchmark::kMillisecond);

void BM_Resample44kTo16k(benchmark::State& st) {
  std::vector<float> x(44100 * 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(std::sin(0.01 * i));
  for (auto _ : st) benchmark::DoNotOptimize(resample(x, 44100, 16000));
}
BENCHMARK(BM_Resample44kTo16k)->Unit(benchmark::kMillisecond);

void BM_SpeedPerturb(benchmark::State& st) {
  const Waveform w = noise_segment(3.0);
  const double f = st.range(0) / 100.0;
  for (auto _ : st) benchmark::DoNotOptimize(speed_perturb(w, f));
}
BENCHMARK(BM_SpeedPerturb)->Arg(90)->Arg(110)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& st) {
  const TdnnConfig cfg;
  const auto p = Parameters<float>::he_uniform(cfg, 1);
  const Matrix<float> x = features(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(forward(x, p, cfg));
}
BENCHMARK(BM_Forward)->Arg(298)->Arg(1000)->Unit(benchmark::kMillisecond);

// The training step with the default two frozen blocks: blocks 3-5 forward
// and backward from a cached prefix.
void BM_TrainStepFromPrefix(benchmark::State& st) {
  const TdnnConfig cfg;
  auto p = Parameters<float>::he_uniform(cfg, 1);
  apply_freeze(p, 2);
  const Matrix<float> prefix = run_blocks(features(298), p, cfg, 0, 2);
  auto g = Parameters<float>::zeros(cfg);
  for (auto _ : st) {
    const auto out = forward(prefix, p, cfg, true, 2);
    g.set_zero();
    backward(out, 1.0f, p, cfg, g);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_TrainStepFromPrefix)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
