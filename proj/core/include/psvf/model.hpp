#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace psvf {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// One dilated 1-D convolution over time followed by ReLU. No padding: a block
// shortens the sequence by (kernel - 1) * dilation frames.
struct BlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int dilation = 1;

  bool operator==(const BlockSpec&) const = default;
};

inline constexpr int kTdnnBlocks = 5;
inline constexpr int kEmbedDim = 64;

struct TdnnConfig {
  std::vector<BlockSpec> blocks{
      {24, 128, 5, 1}, {128, 128, 3, 2}, {128, 128, 3, 3}, {128, 128, 1, 1}, {128, 384, 1, 1}};
  int embed_dim = kEmbedDim;
  int frozen_blocks = 2;

  // Structural checks (channel chaining, positive sizes, frozen range) always
  // run; strict additionally pins 5 blocks, 24 input channels and a 64-dim
  // embedding. Throws ConfigError.
  void validate(bool strict = true) const;

  int input_channels() const { return blocks.front().in_channels; }
  int pooled_dim() const { return 2 * blocks.back().out_channels; }
  // Minimum number of input frames for one output frame.
  int receptive_field() const;

  bool operator==(const TdnnConfig&) const = default;
};

// sum_b (k_b * in_b * out_b + out_b) + (2 * C_last * E + E) + (E + 1)
std::size_t parameter_count(const TdnnConfig& cfg);

template <class T>
struct NamedTensor {
  std::string name;
  Matrix<T> value;
  bool frozen = false;

  // Exact, element-wise; tensors of different shape compare unequal.
  bool operator==(const NamedTensor& o) const {
    return name == o.name && frozen == o.frozen && value.rows() == o.value.rows() &&
           value.cols() == o.value.cols() && value == o.value;
  }
};

// Tensor order: block0.weight, block0.bias, ..., embed.weight, embed.bias,
// head.weight, head.bias. Block weights are out x (kernel * in), column
// j * in + c holding tap j of channel c. Biases are out x 1.
template <class T>
struct Parameters {
  std::vector<NamedTensor<T>> tensors;

  static Parameters zeros(const TdnnConfig& cfg);
  // He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static Parameters he_uniform(const TdnnConfig& cfg, std::uint64_t seed);

  const Matrix<T>& block_weight(int b) const { return tensors[2 * b].value; }
  const Matrix<T>& block_bias(int b) const { return tensors[2 * b + 1].value; }
  Matrix<T>& block_weight(int b) { return tensors[2 * b].value; }
  Matrix<T>& block_bias(int b) { return tensors[2 * b + 1].value; }
  std::size_t embed_index() const { return tensors.size() - 4; }
  const Matrix<T>& embed_weight() const { return tensors[embed_index()].value; }
  const Matrix<T>& embed_bias() const { return tensors[embed_index() + 1].value; }
  const Matrix<T>& head_weight() const { return tensors[embed_index() + 2].value; }
  const Matrix<T>& head_bias() const { return tensors[embed_index() + 3].value; }
  Matrix<T>& head_weight() { return tensors[embed_index() + 2].value; }
  Matrix<T>& head_bias() { return tensors[embed_index() + 3].value; }

  std::size_t size() const;
  bool all_finite() const;
  void set_zero();
  // this += other, tensor by tensor.
  void add(const Parameters& other);
  template <class U>
  Parameters<U> cast() const;

  // Throws ShapeMismatch when a tensor disagrees with cfg.
  void check_shapes(const TdnnConfig& cfg) const;

  bool operator==(const Parameters&) const = default;
};

// Marks the tensors of blocks [0, frozen_blocks) frozen and every other tensor
// trainable. Throws ConfigError outside 0..number of blocks.
template <class T>
void apply_freeze(Parameters<T>& params, int frozen_blocks);

// Activations kept by a training-mode forward pass.
template <class T>
struct ForwardCache {
  int start_block = 0;
  std::vector<Matrix<T>> activations;  // [0] = input to start_block, [i+1] = its block output
  Vector<T> pooled;                    // mean then std per channel
  Vector<T> pooled_std;                // unclamped std
  Vector<T> embedding;                 // after ReLU
  T score = T(0);
};

template <class T>
struct ForwardOutput {
  T score = T(0.5);
  Vector<T> embedding;
  std::optional<ForwardCache<T>> cache;  // training mode only
};

inline constexpr double kStdFloor = 1e-9;

// Per-channel mean and population standard deviation, concatenated.
template <class T>
Vector<T> stats_pool(const Matrix<T>& frames);

// Runs blocks [start_block, end) on input (frames x channels) and returns
// the activation after block end - 1. Throws TooFewFrames.
template <class T>
Matrix<T> run_blocks(const Matrix<T>& input, const Parameters<T>& params, const TdnnConfig& cfg,
                     int start_block, int end_block);

// Full pass: TDNN blocks -> stats pooling -> linear -> ReLU (the embedding)
// -> linear -> sigmoid. input is either features (start_block 0) or the
// activation after block start_block - 1. Throws TooFewFrames.
template <class T>
ForwardOutput<T> forward(const Matrix<T>& input, const Parameters<T>& params,
                         const TdnnConfig& cfg, bool training = false, int start_block = 0);

// Adds d(loss)/d(params) into grads given d(loss)/d(score). Frozen tensors get
// nothing, and propagation stops at the first frozen block. Throws
// MissingCache when out was produced without training mode.
template <class T>
void backward(const ForwardOutput<T>& out, T dscore, const Parameters<T>& params,
              const TdnnConfig& cfg, Parameters<T>& grads);

// Mean absolute error. Throws LengthMismatch on unequal or empty input.
double l1_loss(const std::vector<double>& pred, const std::vector<double>& target);
// d(l1)/d(pred_i) = sign(pred_i - target_i) / n with sign(0) = 0.
std::vector<double> l1_grad(const std::vector<double>& pred, const std::vector<double>& target);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

// Adam with bias correction. Frozen tensors are never written.
class Adam {
 public:
  Adam(AdamConfig cfg, const Parameters<float>& like);
  void step(Parameters<float>& params, const Parameters<float>& grads);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  Parameters<float> m_;
  Parameters<float> v_;
};

}  // namespace psvf
