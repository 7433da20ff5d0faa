#include "psvf/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "psvf/error.hpp"

namespace psvf {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  os.write(b, 2);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw UnsupportedFormat(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw IoError(path + ": truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      block_align = le16(chunk + 20);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40 || avail < 40) throw UnsupportedFormat(path + ": bad extensible fmt");
        format = le16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streams written without knowing their length put 0 or 0xFFFFFFFF here.
      data_size = (size == 0 || size > avail) ? avail : size;
      if (size > avail && size != 0xFFFFFFFFu) throw IoError(path + ": truncated data chunk");
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw UnsupportedFormat(path + ": missing fmt chunk");
  if (!data) throw IoError(path + ": missing data chunk");
  if (channels == 0 || rate == 0) throw UnsupportedFormat(path + ": invalid channel count/rate");

  const bool is_float = format == kFormatFloat && bits == 32;
  const bool is_pcm = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  if (!is_float && !is_pcm)
    throw UnsupportedFormat(path + ": unsupported encoding (format " + std::to_string(format) +
                            ", " + std::to_string(bits) + " bits)");
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels)
    throw UnsupportedFormat(path + ": inconsistent block alignment");

  const std::size_t frames = data_size / block_align;
  WavData out;
  out.sample_rate = rate;
  out.channels.assign(channels, std::vector<float>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * block_align + c * bytes_per_sample;
      float v = 0.0f;
      if (is_float) {
        std::uint32_t u = le32(p);
        std::memcpy(&v, &u, 4);
        if (!std::isfinite(v)) throw UnsupportedFormat(path + ": non-finite sample");
      } else {
        switch (bits) {
          case 8: v = (static_cast<float>(p[0]) - 128.0f) / 128.0f; break;
          case 16: v = static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f; break;
          case 24: {
            std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
            if (s & 0x800000) s -= 0x1000000;
            v = static_cast<float>(s) / 8388608.0f;
            break;
          }
          case 32:
            v = static_cast<float>(static_cast<double>(static_cast<std::int32_t>(le32(p))) /
                                   2147483648.0);
            break;
        }
      }
      out.channels[c][f] = v;
    }
  }
  return out;
}

Waveform load_audio(const std::string& path, double target_rate) {
  if (!(target_rate > 0.0)) throw ConfigError("target sample rate must be positive");
  WavData wav = read_wav(path);
  const std::size_t n = wav.channels.front().size();
  std::vector<float> mono(n);
  const double inv = 1.0 / static_cast<double>(wav.channels.size());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& ch : wav.channels) acc += ch[i];
    mono[i] = static_cast<float>(acc * inv);
  }
  Waveform w;
  w.sample_rate = target_rate;
  w.samples = resample(mono, wav.sample_rate, target_rate);
  for (float& s : w.samples) s = std::clamp(s, -1.0f, 1.0f);
  return w;
}

void write_wav(const std::string& path, const std::vector<std::vector<float>>& channels,
               double sample_rate, WavEncoding encoding) {
  if (channels.empty()) throw ConfigError("write_wav: no channels");
  const std::size_t frames = channels.front().size();
  for (const auto& c : channels)
    if (c.size() != frames) throw LengthMismatch("write_wav: channel lengths differ");
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t align = static_cast<std::uint16_t>(nch * bits / 8);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * align);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put16(os, nch);
  put32(os, rate);
  put32(os, rate * align);
  put16(os, align);
  put16(os, bits);
  os.write("data", 4);
  put32(os, data_bytes);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& c : channels) {
      if (encoding == WavEncoding::pcm16) {
        const float v = std::clamp(c[f], -1.0f, 1.0f);
        const long q = std::clamp(std::lround(v * 32768.0f), -32768L, 32767L);
        put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        std::uint32_t u;
        std::memcpy(&u, &c[f], 4);
        put32(os, u);
      }
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding encoding) {
  write_wav(path, std::vector<std::vector<float>>{w.samples}, w.sample_rate, encoding);
}

namespace {

constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.95;

}  // namespace

std::vector<float> resample_at_step(const std::vector<float>& x, double step,
                                    std::size_t out_len) {
  if (!(step > 0.0)) throw ConfigError("resample step must be positive");
  // Decimating (step > 1) lowers the cutoff below the output Nyquist.
  const double cutoff = step > 1.0 ? kRolloff / step : 1.0;
  const double half_width = kZeroCrossings / cutoff;
  const long n_in = static_cast<long>(x.size());
  const double sin_sinc = std::sin(std::numbers::pi * cutoff);
  const double cos_sinc = std::cos(std::numbers::pi * cutoff);
  const double sin_win = std::sin(std::numbers::pi / half_width);
  const double cos_win = std::cos(std::numbers::pi / half_width);
  std::vector<float> y(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * step;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    // sin and cos of both phases advance by fixed angles as k steps, so they
    // are rotated instead of re-evaluated per tap.
    const double u0 = t - static_cast<double>(lo);
    double s_sinc = std::sin(std::numbers::pi * cutoff * u0);
    double c_sinc = std::cos(std::numbers::pi * cutoff * u0);
    double s_win = std::sin(std::numbers::pi * u0 / half_width);
    double c_win = std::cos(std::numbers::pi * u0 / half_width);
    for (long k = lo; k <= hi; ++k) {
      const double u = t - static_cast<double>(k);
      const double arg = std::numbers::pi * cutoff * u;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : s_sinc / arg;
      const double win = 0.5 + 0.5 * c_win;
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * win;
      // u decreases by one per tap.
      const double s1 = s_sinc * cos_sinc - c_sinc * sin_sinc;
      c_sinc = c_sinc * cos_sinc + s_sinc * sin_sinc;
      s_sinc = s1;
      const double s2 = s_win * cos_win - c_win * sin_win;
      c_win = c_win * cos_win + s_win * sin_win;
      s_win = s2;
    }
    y[n] = static_cast<float>(acc);
  }
  return y;
}

std::vector<float> resample(const std::vector<float>& samples, double from_rate, double to_rate) {
  if (!(from_rate > 0.0) || !(to_rate > 0.0)) throw ConfigError("sample rates must be positive");
  if (from_rate == to_rate) return samples;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(samples.size()) * to_rate / from_rate));
  return resample_at_step(samples, from_rate / to_rate, out_len);
}

Waveform extract_segment(const Waveform& w, double start, double duration, std::size_t* padded) {
  if (!(start >= 0.0)) throw OutOfRange("segment start must be non-negative");
  if (!(duration > 0.0)) throw OutOfRange("segment duration must be positive");
  const auto first = static_cast<std::size_t>(std::llround(start * w.sample_rate));
  const auto count = static_cast<std::size_t>(std::llround(duration * w.sample_rate));
  if (first >= w.samples.size()) {
    std::ostringstream msg;
    msg << "segment start " << start << " s is beyond the end of the audio (" << w.duration()
        << " s)";
    throw OutOfRange(msg.str());
  }
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(count, 0.0f);
  const std::size_t avail = std::min(count, w.samples.size() - first);
  std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(first), avail, out.samples.begin());
  if (padded) *padded = count - avail;
  return out;
}

}  // namespace psvf
