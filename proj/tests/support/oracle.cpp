#include "oracle.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <set>

namespace psvf::oracle {

namespace {

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool chance(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

bool member(const ParticipantMeta& p, const ParticipantValue& v) {
  if (auto g = std::get_if<Gender>(&v)) return p.gender == *g;
  if (auto a = std::get_if<ParticipantAge>(&v)) return p.age_group == *a;
  const Language l = std::get<Language>(v);
  for (Language x : p.languages)
    if (x == l) return true;
  return false;
}

bool member(const SegmentMeta& s, const SingerValue& v) {
  if (auto x = std::get_if<Sex>(&v)) return s.singer_sex == *x;
  if (auto a = std::get_if<SingerAge>(&v)) return s.singer_age_group == *a;
  return s.language == std::get<Language>(v);
}

// Integer rating sum and count per segment over valid responses of the
// qualifying participants.
std::map<std::string, std::pair<int, int>> sums(const SurveyDataset& raw,
                                                const std::optional<ParticipantValue>& pv) {
  std::set<std::string> ok;
  for (const ParticipantMeta& p : raw.participants())
    if (!p.reported_difficulty && (!pv || member(p, *pv))) ok.insert(p.participant_id);
  std::map<std::string, std::pair<int, int>> out;
  for (const Response& r : raw.responses()) {
    if (r.recognized_singer || !ok.count(r.participant_id)) continue;
    auto& e = out[r.segment_id];
    e.first += r.likert;
    e.second += 1;
  }
  return out;
}

}  // namespace

SurveyDataset random_survey(std::uint64_t seed, int n_songs, int n_participants,
                            double response_rate) {
  std::mt19937_64 rng(seed);
  const std::vector<Sex> sexes(std::begin(kAllSexes), std::end(kAllSexes));
  const std::vector<SingerAge> sages(std::begin(kAllSingerAges), std::end(kAllSingerAges));
  const std::vector<ParticipantAge> pages(std::begin(kAllParticipantAges),
                                          std::end(kAllParticipantAges));
  const std::vector<Language> langs(std::begin(kAllLanguages), std::end(kAllLanguages));
  const std::vector<Gender> genders(std::begin(kAllGenders), std::end(kAllGenders));

  std::vector<SegmentMeta> segs;
  for (int s = 0; s < n_songs; ++s) {
    const Sex sex = pick(rng, sexes);
    const SingerAge age = pick(rng, sages);
    const Language lang = pick(rng, langs);
    const int n = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int k = 0; k < n; ++k) {
      SegmentMeta m;
      m.segment_id = "g" + std::to_string(s) + "_" + std::to_string(k);
      m.song_id = "song" + std::to_string(s);
      m.singer_sex = sex;
      m.singer_age_group = age;
      m.language = lang;
      m.start_time = 3.0 * k;
      segs.push_back(m);
    }
  }
  std::vector<ParticipantMeta> parts;
  for (int p = 0; p < n_participants; ++p) {
    ParticipantMeta m;
    m.participant_id = "u" + std::to_string(p);
    m.gender = pick(rng, genders);
    m.age_group = pick(rng, pages);
    for (Language l : langs)
      if (chance(rng, 0.35)) m.languages.insert(l);
    m.reported_difficulty = chance(rng, 0.1);
    parts.push_back(m);
  }
  std::vector<Response> resp;
  for (const ParticipantMeta& p : parts) {
    // Each participant leans one way so that means spread over [-2, 2].
    const int lean = std::uniform_int_distribution<int>(-1, 1)(rng);
    for (const SegmentMeta& s : segs) {
      if (!chance(rng, response_rate)) continue;
      const int bias = s.singer_sex == Sex::female ? 1 : -1;
      int v = std::uniform_int_distribution<int>(-2, 2)(rng);
      if (chance(rng, 0.5)) v = std::clamp(bias + lean + std::uniform_int_distribution<int>(-1, 1)(rng), -2, 2);
      resp.push_back({p.participant_id, s.segment_id, v, chance(rng, 0.08)});
    }
  }
  return SurveyDataset(std::move(segs), std::move(parts), std::move(resp));
}

Count brute_force_ac(const SurveyDataset& raw, const SubgroupKey& key, bool zero_aligns) {
  const auto s = sums(raw, key.participant);
  Count c;
  for (const SegmentMeta& seg : raw.segments()) {
    if (key.singer && !member(seg, *key.singer)) continue;
    auto it = s.find(seg.segment_id);
    if (it == s.end() || it->second.second == 0) continue;
    const int sum = it->second.first;
    ++c.n;
    if (sum == 0) {
      if (zero_aligns) ++c.hits;
    } else if ((sum > 0) == (seg.singer_sex == Sex::female)) {
      ++c.hits;
    }
  }
  return c;
}

Count brute_force_unsure(const SurveyDataset& raw, const SubgroupKey& key, bool inclusive) {
  const auto s = sums(raw, key.participant);
  Count c;
  for (const SegmentMeta& seg : raw.segments()) {
    if (key.singer && !member(seg, *key.singer)) continue;
    auto it = s.find(seg.segment_id);
    if (it == s.end() || it->second.second == 0) continue;
    ++c.n;
    // |sum / n| < 1/2  <=>  |2 sum| < n
    const int twice = std::abs(2 * it->second.first);
    if (inclusive ? twice <= it->second.second : twice < it->second.second) ++c.hits;
  }
  return c;
}

std::vector<double> two_pass_stats(const std::vector<std::vector<double>>& rows) {
  const std::size_t c = rows.front().size();
  std::vector<double> out(2 * c);
  for (std::size_t k = 0; k < c; ++k) {
    long double sum = 0;
    for (const auto& r : rows) sum += r[k];
    const long double mean = sum / rows.size();
    long double ss = 0;
    for (const auto& r : rows) ss += (r[k] - mean) * (r[k] - mean);
    out[k] = static_cast<double>(mean);
    out[c + k] = static_cast<double>(std::sqrt(ss / rows.size()));
  }
  return out;
}

namespace {

double dtft_magnitude(const std::vector<float>& x, double rate, double f) {
  const std::size_t n = x.size();
  const std::complex<double> step = std::polar(1.0, -2 * std::numbers::pi * f / rate);
  std::complex<double> ph = 1.0, acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / (n - 1));
    acc += w * x[i] * ph;
    ph *= step;
    if ((i & 1023) == 0) ph /= std::abs(ph);
  }
  return std::abs(acc);
}

}  // namespace

double spectral_peak(const std::vector<float>& x, double rate, double lo, double hi) {
  double best_f = lo, best = -1;
  for (double f = lo; f <= hi; f += 1.0) {
    const double m = dtft_magnitude(x, rate, f);
    if (m > best) best = m, best_f = f;
  }
  const double c = best_f;
  for (double f = c - 1.0; f <= c + 1.0; f += 0.01) {
    const double m = dtft_magnitude(x, rate, f);
    if (m > best) best = m, best_f = f;
  }
  return best_f;
}

TdnnConfig reduced_config() {
  TdnnConfig cfg;
  cfg.blocks = {{24, 4, 3, 1}, {4, 4, 3, 2}};
  cfg.embed_dim = 8;
  cfg.frozen_blocks = 0;
  return cfg;
}

namespace {

struct Eval {
  double loss = 0.0;
  std::vector<bool> pattern;
};

Eval evaluate(const Matrix<double>& x, const Parameters<double>& p, const TdnnConfig& cfg,
              double target) {
  const ForwardOutput<double> o = forward(x, p, cfg, true);
  Eval e;
  e.loss = std::abs(o.score - target);
  for (std::size_t a = 1; a < o.cache->activations.size(); ++a) {
    const Matrix<double>& m = o.cache->activations[a];
    for (Eigen::Index i = 0; i < m.size(); ++i) e.pattern.push_back(m.data()[i] > 0);
  }
  for (Eigen::Index i = 0; i < o.embedding.size(); ++i) e.pattern.push_back(o.embedding[i] > 0);
  return e;
}

}  // namespace

GradCheck finite_difference_check(std::uint64_t seed, const TdnnConfig& cfg, int frames,
                                  double eps) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Parameters<double> params = Parameters<double>::he_uniform(cfg, seed);
  // Non-zero biases so that every bias gradient is exercised.
  for (auto& t : params.tensors)
    if (t.value.cols() == 1)
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = 0.1 * normal(rng);
  apply_freeze(params, 0);
  Matrix<double> x(frames, cfg.input_channels());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);

  const ForwardOutput<double> out = forward(x, params, cfg, true);
  const double target = out.score < 0.5 ? 1.0 : 0.0;
  const double dscore = out.score > target ? 1.0 : -1.0;
  Parameters<double> grads = Parameters<double>::zeros(cfg);
  backward(out, dscore, params, cfg, grads);

  GradCheck r;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    Matrix<double>& v = params.tensors[t].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + eps;
      const Eval plus = evaluate(x, params, cfg, target);
      v.data()[i] = orig - eps;
      const Eval minus = evaluate(x, params, cfg, target);
      v.data()[i] = orig;
      if (plus.pattern != minus.pattern) {
        ++r.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2 * eps);
      const double analytic = grads.tensors[t].value.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic) / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace psvf::oracle
