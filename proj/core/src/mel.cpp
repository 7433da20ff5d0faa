#include "psvf/mel.hpp"

#include <unsupported/Eigen/FFT>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "psvf/error.hpp"

namespace psvf {

void MelConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("mel: sample_rate must be positive");
  if (n_mels != kMelBins) throw ConfigError("mel: n_mels must be 24");
  if (window <= 0 || hop <= 0) throw ConfigError("mel: window and hop must be positive");
  if (window > fft_size) throw ConfigError("mel: window exceeds fft_size");
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0)
    throw ConfigError("mel: fft_size must be a power of two");
  if (!(f_min >= 0.0) || !(f_max > f_min)) throw ConfigError("mel: need 0 <= f_min < f_max");
  if (f_max > sample_rate / 2.0) throw ConfigError("mel: f_max above Nyquist");
  if (!(log_floor > 0.0)) throw ConfigError("mel: log_floor must be positive");
}

std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.window);
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / static_cast<std::size_t>(cfg.hop);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::VectorXd mel_band_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.f_max);
  Eigen::VectorXd edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}

Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.fft_size / 2 + 1;
  const Eigen::VectorXd edges = mel_band_edges(cfg);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double scale = 2.0 / (right - left);
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * cfg.sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w * scale;
    }
  }
  return fb;
}

MelSpec melspectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("melspectrogram: waveform rate " + std::to_string(w.sample_rate) +
                      " != configured " + std::to_string(cfg.sample_rate));
  const std::size_t frames = frame_count(w.samples.size(), cfg);
  if (frames == 0)
    throw TooShort("melspectrogram: " + std::to_string(w.samples.size()) +
                   " samples is shorter than one window");

  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const int n_bins = cfg.fft_size / 2 + 1;
  std::vector<double> hann(static_cast<std::size_t>(cfg.window));
  for (int i = 0; i < cfg.window; ++i)
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size), 0.0);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd power(n_bins);
  Eigen::MatrixXd logmel(static_cast<Eigen::Index>(frames), cfg.n_mels);

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.window; ++i) {
      const auto u = static_cast<std::size_t>(i);
      frame[u] = static_cast<double>(w.samples[off + u]) * hann[u];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spectrum[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      logmel(static_cast<Eigen::Index>(t), m) = std::log(std::max(mel[m], cfg.log_floor));
  }
  if (cfg.cmvn) logmel.rowwise() -= logmel.colwise().mean();

  MelSpec out;
  out.matrix = logmel.cast<float>();
  out.config = cfg;
  return out;
}

namespace {
constexpr char kMelMagic[8] = {'P', 'S', 'V', 'F', 'M', 'E', 'L', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated mel cache file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void write_mel_cache(const std::string& path, const FeatureMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(kMelMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, m.data() + i, 4);
    put_u32(os, u);
  }
  if (!os) throw IoError("write failed: " + path);
}

FeatureMatrix read_mel_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMelMagic, 8) != 0)
    throw UnsupportedFormat(path + ": not a PSVFMEL1 feature file");
  const std::uint32_t frames = get_u32(is);
  const std::uint32_t bins = get_u32(is);
  FeatureMatrix m(frames, bins);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t u = get_u32(is);
    std::memcpy(m.data() + i, &u, 4);
  }
  return m;
}

}  // namespace psvf
