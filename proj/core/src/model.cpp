#include "psvf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "psvf/augment.hpp"
#include "psvf/error.hpp"

namespace psvf {

void TdnnConfig::validate(bool strict) const {
  if (blocks.empty()) throw ConfigError("tdnn: no blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockSpec& b = blocks[i];
    if (b.in_channels <= 0 || b.out_channels <= 0 || b.kernel <= 0 || b.dilation <= 0)
      throw ConfigError("tdnn: block " + std::to_string(i + 1) + " has a non-positive size");
    if (i > 0 && b.in_channels != blocks[i - 1].out_channels)
      throw ConfigError("tdnn: block " + std::to_string(i + 1) +
                        " input channels do not match the previous block");
  }
  if (embed_dim <= 0) throw ConfigError("tdnn: embed_dim must be positive");
  if (frozen_blocks < 0 || frozen_blocks > static_cast<int>(blocks.size()))
    throw ConfigError("tdnn: frozen_blocks out of range");
  if (strict) {
    if (blocks.size() != kTdnnBlocks) throw ConfigError("tdnn: exactly 5 blocks are required");
    if (blocks.front().in_channels != 24) throw ConfigError("tdnn: input must be 24 mel bins");
    if (embed_dim != kEmbedDim) throw ConfigError("tdnn: embed_dim must be 64");
  }
}

int TdnnConfig::receptive_field() const {
  int rf = 1;
  for (const BlockSpec& b : blocks) rf += (b.kernel - 1) * b.dilation;
  return rf;
}

std::size_t parameter_count(const TdnnConfig& cfg) {
  std::size_t n = 0;
  for (const BlockSpec& b : cfg.blocks)
    n += static_cast<std::size_t>(b.kernel * b.in_channels * b.out_channels + b.out_channels);
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  n += static_cast<std::size_t>(cfg.pooled_dim()) * e + e;
  n += e + 1;
  return n;
}

template <class T>
Parameters<T> Parameters<T>::zeros(const TdnnConfig& cfg) {
  cfg.validate(false);
  Parameters p;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BlockSpec& b = cfg.blocks[i];
    const std::string prefix = "block" + std::to_string(i);
    p.tensors.push_back({prefix + ".weight",
                         Matrix<T>::Zero(b.out_channels, b.kernel * b.in_channels), false});
    p.tensors.push_back({prefix + ".bias", Matrix<T>::Zero(b.out_channels, 1), false});
  }
  p.tensors.push_back({"embed.weight", Matrix<T>::Zero(cfg.embed_dim, cfg.pooled_dim()), false});
  p.tensors.push_back({"embed.bias", Matrix<T>::Zero(cfg.embed_dim, 1), false});
  p.tensors.push_back({"head.weight", Matrix<T>::Zero(1, cfg.embed_dim), false});
  p.tensors.push_back({"head.bias", Matrix<T>::Zero(1, 1), false});
  apply_freeze(p, cfg.frozen_blocks);
  return p;
}

template <class T>
Parameters<T> Parameters<T>::he_uniform(const TdnnConfig& cfg, std::uint64_t seed) {
  Parameters p = zeros(cfg);
  std::mt19937_64 rng(seed);
  // Weights are the even-indexed tensors; fan-in is their column count.
  for (std::size_t i = 0; i < p.tensors.size(); i += 2) {
    Matrix<T>& w = p.tensors[i].value;
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index k = 0; k < w.size(); ++k)
      w.data()[k] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  }
  return p;
}

template <class T>
std::size_t Parameters<T>::size() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

template <class T>
bool Parameters<T>::all_finite() const {
  for (const auto& t : tensors)
    if (!t.value.allFinite()) return false;
  return true;
}

template <class T>
void Parameters<T>::set_zero() {
  for (auto& t : tensors) t.value.setZero();
}

template <class T>
void Parameters<T>::add(const Parameters& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i].value += other.tensors[i].value;
}

template <class T>
template <class U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out;
  for (const auto& t : tensors)
    out.tensors.push_back({t.name, t.value.template cast<U>(), t.frozen});
  return out;
}

template <class T>
void Parameters<T>::check_shapes(const TdnnConfig& cfg) const {
  const Parameters<T> ref = zeros(cfg);
  if (ref.tensors.size() != tensors.size())
    throw ShapeMismatch("expected " + std::to_string(ref.tensors.size()) + " tensors, found " +
                        std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = ref.tensors[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
      throw ShapeMismatch("tensor " + a.name + " is " + std::to_string(a.value.rows()) + "x" +
                          std::to_string(a.value.cols()) + ", expected " + b.name + " " +
                          std::to_string(b.value.rows()) + "x" + std::to_string(b.value.cols()));
  }
}

template <class T>
void apply_freeze(Parameters<T>& params, int frozen_blocks) {
  const int n_blocks = static_cast<int>(params.tensors.size() - 4) / 2;
  if (frozen_blocks < 0 || frozen_blocks > n_blocks)
    throw ConfigError("frozen_blocks must be in 0.." + std::to_string(n_blocks));
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    params.tensors[i].frozen = static_cast<int>(i) < 2 * frozen_blocks;
}

template <class T>
Vector<T> stats_pool(const Matrix<T>& frames) {
  const Eigen::Index n = frames.cols();
  Vector<T> out(2 * n);
  if (frames.rows() < 1) throw TooFewFrames("stats_pool: no frames");
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = frames.colwise().mean();
  const Matrix<T> centered = frames.rowwise() - mean;
  out.head(n) = mean.transpose();
  out.tail(n) = (centered.array().square().colwise().sum() / static_cast<T>(frames.rows()))
                    .sqrt()
                    .transpose();
  return out;
}

namespace {

template <class T>
bool tensor_frozen(const Parameters<T>& p, int block) {
  return p.tensors[static_cast<std::size_t>(2 * block)].frozen &&
         p.tensors[static_cast<std::size_t>(2 * block + 1)].frozen;
}

template <class T>
Matrix<T> run_block(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& bias,
                    const BlockSpec& b) {
  const Eigen::Index span = static_cast<Eigen::Index>(b.kernel - 1) * b.dilation;
  const Eigen::Index t_out = x.rows() - span;
  Matrix<T> y(t_out, b.out_channels);
  y.rowwise() = bias.transpose().row(0);
  for (int j = 0; j < b.kernel; ++j) {
    y.noalias() += x.middleRows(static_cast<Eigen::Index>(j) * b.dilation, t_out) *
                   w.middleCols(static_cast<Eigen::Index>(j) * b.in_channels, b.in_channels)
                       .transpose();
  }
  return y.cwiseMax(T(0));
}

template <class T>
T stable_sigmoid(T s) {
  T p;
  if (s >= T(0)) {
    p = T(1) / (T(1) + std::exp(-s));
  } else {
    const T e = std::exp(s);
    p = e / (T(1) + e);
  }
  // Keep the score strictly inside (0, 1) after rounding.
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(p, std::numeric_limits<T>::min(), hi);
}

int remaining_receptive_field(const TdnnConfig& cfg, int start_block, int end_block) {
  int rf = 1;
  for (int b = start_block; b < end_block; ++b)
    rf += (cfg.blocks[static_cast<std::size_t>(b)].kernel - 1) *
          cfg.blocks[static_cast<std::size_t>(b)].dilation;
  return rf;
}

template <class T>
void check_input(const Matrix<T>& input, const TdnnConfig& cfg, int start_block,
                 int end_block) {
  const int n_blocks = static_cast<int>(cfg.blocks.size());
  if (start_block < 0 || start_block > end_block || end_block > n_blocks)
    throw ConfigError("invalid block range");
  const int channels = start_block < n_blocks
                           ? cfg.blocks[static_cast<std::size_t>(start_block)].in_channels
                           : cfg.blocks.back().out_channels;
  if (input.cols() != channels)
    throw ShapeMismatch("input has " + std::to_string(input.cols()) + " channels, expected " +
                        std::to_string(channels));
  const int rf = remaining_receptive_field(cfg, start_block, end_block);
  if (input.rows() < rf)
    throw TooFewFrames("input has " + std::to_string(input.rows()) +
                       " frames, the network needs at least " + std::to_string(rf));
}

}  // namespace

template <class T>
Matrix<T> run_blocks(const Matrix<T>& input, const Parameters<T>& params, const TdnnConfig& cfg,
                     int start_block, int end_block) {
  check_input(input, cfg, start_block, end_block);
  Matrix<T> x = input;
  for (int b = start_block; b < end_block; ++b)
    x = run_block(x, params.block_weight(b), params.block_bias(b),
                  cfg.blocks[static_cast<std::size_t>(b)]);
  return x;
}

template <class T>
ForwardOutput<T> forward(const Matrix<T>& input, const Parameters<T>& params,
                         const TdnnConfig& cfg, bool training, int start_block) {
  const int n_blocks = static_cast<int>(cfg.blocks.size());
  check_input(input, cfg, start_block, n_blocks);

  ForwardCache<T> cache;
  cache.start_block = start_block;
  const Matrix<T>* last = &input;
  Matrix<T> scratch;
  if (training) {
    cache.activations.reserve(static_cast<std::size_t>(n_blocks - start_block + 1));
    cache.activations.push_back(input);
  }
  for (int b = start_block; b < n_blocks; ++b) {
    Matrix<T> y = run_block(*last, params.block_weight(b), params.block_bias(b),
                            cfg.blocks[static_cast<std::size_t>(b)]);
    if (training) {
      cache.activations.push_back(std::move(y));
      last = &cache.activations.back();
    } else {
      scratch = std::move(y);
      last = &scratch;
    }
  }

  const Vector<T> pooled = stats_pool(*last);
  Vector<T> embedding = params.embed_weight() * pooled + params.embed_bias().col(0);
  embedding = embedding.cwiseMax(T(0));
  const T logit = (params.head_weight() * embedding)(0, 0) + params.head_bias()(0, 0);

  ForwardOutput<T> out;
  out.score = stable_sigmoid(logit);
  out.embedding = embedding;
  if (training) {
    const Eigen::Index c = last->cols();
    cache.pooled = pooled;
    cache.pooled_std = pooled.tail(c);
    cache.embedding = embedding;
    cache.score = out.score;
    out.cache = std::move(cache);
  }
  return out;
}

template <class T>
void backward(const ForwardOutput<T>& out, T dscore, const Parameters<T>& params,
              const TdnnConfig& cfg, Parameters<T>& grads) {
  if (!out.cache) throw MissingCache("backward needs a training-mode forward pass");
  const ForwardCache<T>& cache = *out.cache;
  const int n_blocks = static_cast<int>(cfg.blocks.size());
  const std::size_t ei = params.embed_index();

  const T s = cache.score;
  const T dlogit = dscore * s * (T(1) - s);

  if (!params.tensors[ei + 2].frozen)
    grads.tensors[ei + 2].value.noalias() += dlogit * cache.embedding.transpose();
  if (!params.tensors[ei + 3].frozen) grads.tensors[ei + 3].value(0, 0) += dlogit;

  Vector<T> d_embed = dlogit * params.head_weight().row(0).transpose();
  d_embed = (cache.embedding.array() > T(0)).select(d_embed, T(0));
  if (!params.tensors[ei].frozen)
    grads.tensors[ei].value.noalias() += d_embed * cache.pooled.transpose();
  if (!params.tensors[ei + 1].frozen) grads.tensors[ei + 1].value.col(0) += d_embed;

  // Lowest block that still needs a gradient.
  int lowest = n_blocks;
  for (int b = n_blocks - 1; b >= cache.start_block; --b)
    if (!tensor_frozen(params, b)) lowest = b;
  if (lowest == n_blocks) return;

  const Vector<T> d_pooled = params.embed_weight().transpose() * d_embed;
  const Matrix<T>& h = cache.activations.back();
  const Eigen::Index c = h.cols();
  const T inv_t = T(1) / static_cast<T>(h.rows());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = cache.pooled.head(c).transpose();
  Eigen::Matrix<T, 1, Eigen::Dynamic> std_scale(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const T sd = std::max(cache.pooled_std[k], static_cast<T>(kStdFloor));
    std_scale[k] = d_pooled[c + k] * inv_t / sd;
  }
  Matrix<T> dh = (h.rowwise() - mean).array().rowwise() * std_scale.array();
  dh.rowwise() += (d_pooled.head(c) * inv_t).transpose();

  for (int b = n_blocks - 1; b >= lowest; --b) {
    const BlockSpec& spec = cfg.blocks[static_cast<std::size_t>(b)];
    const Matrix<T>& y = cache.activations[static_cast<std::size_t>(b - cache.start_block + 1)];
    const Matrix<T>& x = cache.activations[static_cast<std::size_t>(b - cache.start_block)];
    const Matrix<T> dz = (y.array() > T(0)).select(dh, T(0));
    const Eigen::Index t_out = y.rows();
    const bool frozen = tensor_frozen(params, b);
    if (!frozen) {
      Matrix<T>& gw = grads.block_weight(b);
      for (int j = 0; j < spec.kernel; ++j) {
        gw.middleCols(static_cast<Eigen::Index>(j) * spec.in_channels, spec.in_channels)
            .noalias() +=
            dz.transpose() * x.middleRows(static_cast<Eigen::Index>(j) * spec.dilation, t_out);
      }
      grads.block_bias(b).col(0) += dz.colwise().sum().transpose();
    }
    if (b > lowest) {
      Matrix<T> dx = Matrix<T>::Zero(x.rows(), x.cols());
      const Matrix<T>& w = params.block_weight(b);
      for (int j = 0; j < spec.kernel; ++j) {
        dx.middleRows(static_cast<Eigen::Index>(j) * spec.dilation, t_out).noalias() +=
            dz * w.middleCols(static_cast<Eigen::Index>(j) * spec.in_channels, spec.in_channels);
      }
      dh = std::move(dx);
    }
  }
}

double l1_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw LengthMismatch("l1_loss: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
  return sum / static_cast<double>(pred.size());
}

std::vector<double> l1_grad(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw LengthMismatch("l1_grad: length mismatch");
  std::vector<double> g(pred.size());
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    g[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  return g;
}

Adam::Adam(AdamConfig cfg, const Parameters<float>& like) : cfg_(cfg), m_(like), v_(like) {
  if (!(cfg_.lr >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.eps > 0.0))
    throw ConfigError("adam: invalid hyperparameters");
  m_.set_zero();
  v_.set_zero();
}

void Adam::step(Parameters<float>& params, const Parameters<float>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float step = static_cast<float>(cfg_.lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(cfg_.eps);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (params.tensors[i].frozen) continue;
    auto g = grads.tensors[i].value.array();
    auto m = m_.tensors[i].value.array();
    auto v = v_.tensors[i].value.array();
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    params.tensors[i].value.array() -= step * m / ((v * inv_c2).sqrt() + eps);
  }
}

#define PSVF_INSTANTIATE(T)                                                                    \
  template struct Parameters<T>;                                                               \
  template void apply_freeze<T>(Parameters<T>&, int);                                          \
  template Vector<T> stats_pool<T>(const Matrix<T>&);                                          \
  template Matrix<T> run_blocks<T>(const Matrix<T>&, const Parameters<T>&, const TdnnConfig&,  \
                                   int, int);                                                  \
  template ForwardOutput<T> forward<T>(const Matrix<T>&, const Parameters<T>&,                 \
                                       const TdnnConfig&, bool, int);                          \
  template void backward<T>(const ForwardOutput<T>&, T, const Parameters<T>&,                  \
                            const TdnnConfig&, Parameters<T>&);

PSVF_INSTANTIATE(float)
PSVF_INSTANTIATE(double)
#undef PSVF_INSTANTIATE

template Parameters<double> Parameters<float>::cast<double>() const;
template Parameters<float> Parameters<double>::cast<float>() const;
template Parameters<float> Parameters<float>::cast<float>() const;
template Parameters<double> Parameters<double>::cast<double>() const;

}  // namespace psvf
