#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "beamkd/nn/linalg.hpp"

// Layers with hand-written backward passes.  Each layer keeps the cache of
// its most recent training-mode forward call; backward() consumes it and
// accumulates into Parameter::grad.

namespace beamkd::nn {

struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;  ///< false for running statistics

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> s, bool train = true);
  std::size_t size() const { return value.size(); }
};

/// Convolutional activations in channel-major layout [C][N][H][W], so a
/// channel's values over the whole batch are contiguous.
struct Feature4 {
  int channels = 0, count = 0, height = 0, width = 0;
  std::vector<double> values;

  Feature4() = default;
  Feature4(int c, int n, int h, int w)
      : channels(c), count(n), height(h), width(w),
        values(static_cast<std::size_t>(c) * n * h * w, 0.0) {}
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t per_channel() const { return static_cast<std::size_t>(count) * plane(); }
};

void uniform_init(std::vector<double>& v, double bound, std::mt19937_64& rng);

class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride);
  void init(std::mt19937_64& rng);
  Feature4 forward(const Feature4& x, bool keep_cache);
  Feature4 backward(const Feature4& grad_out, bool need_input_grad);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
  std::uint64_t macs(int h, int w) const;
  int out_channels() const { return out_channels_; }

 private:
  int in_channels_, out_channels_, kernel_, stride_, padding_;
  Parameter weight_, bias_;
  std::vector<double> cols_;
  int cache_n_ = 0, cache_h_ = 0, cache_w_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int channels);
  Feature4 forward(const Feature4& x, bool training);
  Feature4 backward(const Feature4& grad_out);
  std::vector<Parameter*> parameters() { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int channels_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  std::vector<double> xhat_, inv_std_;
};

/// In-place rectifier with a cached activity mask.
class Relu {
 public:
  void forward(std::vector<double>& x, bool keep_cache);
  void backward(std::vector<double>& grad) const;

 private:
  std::vector<std::uint8_t> active_;
};

class AdaptiveMaxPool2d {
 public:
  AdaptiveMaxPool2d(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}
  Feature4 forward(const Feature4& x, bool keep_cache);
  Feature4 backward(const Feature4& grad_out) const;

 private:
  int out_h_, out_w_;
  std::vector<std::size_t> argmax_;
  int in_h_ = 0, in_w_ = 0;
};

/// [C][N][H][W] -> rows [N] of C*H*W features (per-image C,H,W order).
Matrix flatten(const Feature4& x);
Feature4 unflatten(const Matrix& m, int channels, int height, int width);

class Linear {
 public:
  Linear(std::string name, int in_features, int out_features);
  void init(std::mt19937_64& rng);
  Matrix forward(const Matrix& x, bool keep_cache);
  Matrix backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  Parameter weight_, bias_;
  Matrix input_;
};

/// Multi-layer GRU (PyTorch gate order r, z, n) driven one time step at a
/// time so callers can feed outputs back as inputs.
class GruStack {
 public:
  GruStack(std::string name, int input_size, int hidden_size, int layers);
  void init(std::mt19937_64& rng);

  int layers() const { return static_cast<int>(cells_.size()); }
  int hidden_size() const { return hidden_; }

  /// Advances every layer by one step; `h` holds one [B x H] state per layer
  /// and is updated in place.  Returns the top layer's new state.
  Matrix step(const Matrix& x, std::vector<Matrix>& h, bool keep_cache);

  /// Drops the recorded tape.
  void clear_tape() { tape_.clear(); }
  std::size_t tape_size() const { return tape_.size(); }

  /// Backpropagates through the most recent recorded step and pops it.
  /// `grad_out` is dL/d(top output) at that step; `grad_h` carries dL/dh
  /// per layer (in: w.r.t. the step's new states, out: w.r.t. its inputs).
  /// Returns dL/dx for the step input.
  Matrix backward_step(const Matrix& grad_out, std::vector<Matrix>& grad_h);

  std::vector<Parameter*> parameters();
  std::uint64_t macs_per_step() const;

 private:
  struct Cell {
    Parameter w_ih, w_hh, b_ih, b_hh;
    int in;
  };
  struct CellCache {
    Matrix x, h, r, z, n, gh_n;
  };
  int hidden_;
  std::vector<Cell> cells_;
  std::vector<std::vector<CellCache>> tape_;
};

/// Self-attention over consecutive groups of `seq_len` rows (one group per
/// sample).  Packed q/k/v input projection plus output projection.
class MultiHeadAttention {
 public:
  MultiHeadAttention(std::string name, int dim, int heads);
  void init(std::mt19937_64& rng);
  Matrix forward(const Matrix& x, int seq_len, bool keep_cache);
  Matrix backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters() { return {&in_w_, &in_b_, &out_w_, &out_b_}; }
  /// Attention weights of the last forward call: [group][head] -> T x T.
  const std::vector<Matrix>& attention() const { return attn_; }
  std::uint64_t macs(int seq_len) const;

 private:
  int dim_, heads_, seq_len_ = 0;
  Parameter in_w_, in_b_, out_w_, out_b_;
  Matrix x_, qkv_, concat_;
  std::vector<Matrix> attn_;
};

class LayerNorm {
 public:
  LayerNorm(std::string name, int dim);
  Matrix forward(const Matrix& x, bool keep_cache);
  Matrix backward(const Matrix& grad_out);
  std::vector<Parameter*> parameters() { return {&gamma_, &beta_}; }

  static constexpr double kEps = 1e-5;

 private:
  int dim_;
  Parameter gamma_, beta_;
  Matrix xhat_;
  std::vector<double> inv_std_;
};

}  // namespace beamkd::nn
