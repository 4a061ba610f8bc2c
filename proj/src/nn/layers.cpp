#include "beamkd/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "beamkd/errors.hpp"

namespace beamkd::nn {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void add_row_bias(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += bias[c];
  }
}

void accumulate_column_sums(const Matrix& m, std::vector<double>& out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c];
  }
}

}  // namespace

Parameter::Parameter(std::string n, std::vector<std::size_t> s, bool train)
    : name(std::move(n)), shape(std::move(s)), trainable(train) {
  const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

void uniform_init(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : v) x = dist(rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(kernel / 2),
      weight_(name + ".weight", {static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels),
                                 static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)}),
      bias_(name + ".bias", {static_cast<std::size_t>(out_channels)}) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1)
    throw UsageError("Conv2d: channels, kernel and stride must be positive");
}

// He-uniform: every convolution here feeds a ReLU, and the student has no
// normalization to undo a shrinking signal.
void Conv2d::init(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_channels_ * kernel_ * kernel_);
  uniform_init(weight_.value, std::sqrt(6.0 / fan_in), rng);
  uniform_init(bias_.value, 1.0 / std::sqrt(fan_in), rng);
}

std::uint64_t Conv2d::macs(int h, int w) const {
  return static_cast<std::uint64_t>(out_size(h)) * out_size(w) * out_channels_ * in_channels_ * kernel_ * kernel_;
}

Feature4 Conv2d::forward(const Feature4& x, bool keep_cache) {
  if (x.channels != in_channels_) throw UsageError("Conv2d: input channel mismatch");
  const int oh = out_size(x.height), ow = out_size(x.width);
  if (oh < 1 || ow < 1) throw UsageError("Conv2d: input too small");
  const std::size_t K = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  const std::size_t P = static_cast<std::size_t>(x.count) * oh * ow;

  cols_.assign(K * P, 0.0);
  for (int ci = 0; ci < in_channels_; ++ci) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        double* dst = cols_.data() + ((static_cast<std::size_t>(ci) * kernel_ + ky) * kernel_ + kx) * P;
        for (int n = 0; n < x.count; ++n) {
          const double* src = x.values.data() + (static_cast<std::size_t>(ci) * x.count + n) * x.plane();
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - padding_ + ky;
            double* drow = dst + (static_cast<std::size_t>(n) * oh + oy) * ow;
            if (iy < 0 || iy >= x.height) continue;
            const double* srow = src + static_cast<std::size_t>(iy) * x.width;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - padding_ + kx;
              if (ix >= 0 && ix < x.width) drow[ox] = srow[ix];
            }
          }
        }
      }
    }
  }

  Feature4 out(out_channels_, x.count, oh, ow);
  gemm_nn(static_cast<std::size_t>(out_channels_), P, K, weight_.value.data(), cols_.data(), out.values.data(), false);
  for (int co = 0; co < out_channels_; ++co) {
    double* row = out.values.data() + static_cast<std::size_t>(co) * P;
    const double b = bias_.value[static_cast<std::size_t>(co)];
    for (std::size_t i = 0; i < P; ++i) row[i] += b;
  }
  cache_n_ = x.count;
  cache_h_ = x.height;
  cache_w_ = x.width;
  if (!keep_cache) {
    cols_.clear();
    cols_.shrink_to_fit();
  }
  return out;
}

Feature4 Conv2d::backward(const Feature4& grad_out, bool need_input_grad) {
  const int oh = out_size(cache_h_), ow = out_size(cache_w_);
  const std::size_t K = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  const std::size_t P = static_cast<std::size_t>(cache_n_) * oh * ow;
  if (cols_.size() != K * P || grad_out.values.size() != static_cast<std::size_t>(out_channels_) * P)
    throw UsageError("Conv2d::backward without a matching training forward");

  for (int co = 0; co < out_channels_; ++co) {
    const double* row = grad_out.values.data() + static_cast<std::size_t>(co) * P;
    bias_.grad[static_cast<std::size_t>(co)] += std::accumulate(row, row + P, 0.0);
  }
  gemm_nt(static_cast<std::size_t>(out_channels_), K, P, grad_out.values.data(), cols_.data(), weight_.grad.data(), true);
  if (!need_input_grad) return {};

  std::vector<double> dcols(K * P);
  gemm_tn(K, P, static_cast<std::size_t>(out_channels_), weight_.value.data(), grad_out.values.data(), dcols.data(), false);
  Feature4 dx(in_channels_, cache_n_, cache_h_, cache_w_);
  for (int ci = 0; ci < in_channels_; ++ci) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const double* src = dcols.data() + ((static_cast<std::size_t>(ci) * kernel_ + ky) * kernel_ + kx) * P;
        for (int n = 0; n < cache_n_; ++n) {
          double* dst = dx.values.data() + (static_cast<std::size_t>(ci) * cache_n_ + n) * dx.plane();
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - padding_ + ky;
            if (iy < 0 || iy >= cache_h_) continue;
            const double* srow = src + (static_cast<std::size_t>(n) * oh + oy) * ow;
            double* drow = dst + static_cast<std::size_t>(iy) * cache_w_;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - padding_ + kx;
              if (ix >= 0 && ix < cache_w_) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : channels_(channels),
      gamma_(name + ".weight", {static_cast<std::size_t>(channels)}),
      beta_(name + ".bias", {static_cast<std::size_t>(channels)}),
      running_mean_(name + ".running_mean", {static_cast<std::size_t>(channels)}, false),
      running_var_(name + ".running_var", {static_cast<std::size_t>(channels)}, false) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
  std::fill(running_var_.value.begin(), running_var_.value.end(), 1.0);
}

Feature4 BatchNorm2d::forward(const Feature4& x, bool training) {
  if (x.channels != channels_) throw UsageError("BatchNorm2d: channel mismatch");
  Feature4 y = x;
  const std::size_t M = x.per_channel();
  if (training) {
    xhat_.resize(x.values.size());
    inv_std_.resize(static_cast<std::size_t>(channels_));
  }
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double* in = x.values.data() + ci * M;
    double* out = y.values.data() + ci * M;
    double mean, inv_std;
    if (training) {
      mean = std::accumulate(in, in + M, 0.0) / static_cast<double>(M);
      double var = 0.0;
      for (std::size_t i = 0; i < M; ++i) var += (in[i] - mean) * (in[i] - mean);
      var /= static_cast<double>(M);
      inv_std = 1.0 / std::sqrt(var + kEps);
      running_mean_.value[ci] = (1.0 - kMomentum) * running_mean_.value[ci] + kMomentum * mean;
      const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
      running_var_.value[ci] = (1.0 - kMomentum) * running_var_.value[ci] + kMomentum * unbiased;
      inv_std_[ci] = inv_std;
      double* xh = xhat_.data() + ci * M;
      for (std::size_t i = 0; i < M; ++i) xh[i] = (in[i] - mean) * inv_std;
    } else {
      mean = running_mean_.value[ci];
      inv_std = 1.0 / std::sqrt(running_var_.value[ci] + kEps);
    }
    const double g = gamma_.value[ci], b = beta_.value[ci];
    for (std::size_t i = 0; i < M; ++i) out[i] = g * (in[i] - mean) * inv_std + b;
  }
  return y;
}

Feature4 BatchNorm2d::backward(const Feature4& grad_out) {
  if (xhat_.size() != grad_out.values.size()) throw UsageError("BatchNorm2d::backward without training forward");
  Feature4 dx = grad_out;
  const std::size_t M = grad_out.per_channel();
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double* g = grad_out.values.data() + ci * M;
    const double* xh = xhat_.data() + ci * M;
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      sum_g += g[i];
      sum_gx += g[i] * xh[i];
    }
    gamma_.grad[ci] += sum_gx;
    beta_.grad[ci] += sum_g;
    const double scale = gamma_.value[ci] * inv_std_[ci] / static_cast<double>(M);
    double* d = dx.values.data() + ci * M;
    for (std::size_t i = 0; i < M; ++i) d[i] = scale * (static_cast<double>(M) * g[i] - sum_g - xh[i] * sum_gx);
  }
  return dx;
}

// ------------------------------------------------------------------ Relu

void Relu::forward(std::vector<double>& x, bool keep_cache) {
  if (keep_cache) active_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > 0.0;
    if (!on) x[i] = 0.0;
    if (keep_cache) active_[i] = on;
  }
}

void Relu::backward(std::vector<double>& grad) const {
  if (grad.size() != active_.size()) throw UsageError("Relu::backward without training forward");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!active_[i]) grad[i] = 0.0;
}

// ----------------------------------------------------- AdaptiveMaxPool2d

Feature4 AdaptiveMaxPool2d::forward(const Feature4& x, bool keep_cache) {
  Feature4 y(x.channels, x.count, out_h_, out_w_);
  if (keep_cache) argmax_.resize(y.values.size());
  in_h_ = x.height;
  in_w_ = x.width;
  const std::size_t planes = static_cast<std::size_t>(x.channels) * x.count;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.values.data() + p * x.plane();
    for (int oy = 0; oy < out_h_; ++oy) {
      const int y0 = (oy * x.height) / out_h_;
      const int y1 = ((oy + 1) * x.height + out_h_ - 1) / out_h_;
      for (int ox = 0; ox < out_w_; ++ox) {
        const int x0 = (ox * x.width) / out_w_;
        const int x1 = ((ox + 1) * x.width + out_w_ - 1) / out_w_;
        std::size_t best = static_cast<std::size_t>(y0) * x.width + x0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) {
            const std::size_t idx = static_cast<std::size_t>(iy) * x.width + ix;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = p * y.plane() + static_cast<std::size_t>(oy) * out_w_ + ox;
        y.values[o] = src[best];
        if (keep_cache) argmax_[o] = p * x.plane() + best;
      }
    }
  }
  return y;
}

Feature4 AdaptiveMaxPool2d::backward(const Feature4& grad_out) const {
  if (argmax_.size() != grad_out.values.size()) throw UsageError("AdaptiveMaxPool2d::backward without forward");
  Feature4 dx(grad_out.channels, grad_out.count, in_h_, in_w_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) dx.values[argmax_[o]] += grad_out.values[o];
  return dx;
}

Matrix flatten(const Feature4& x) {
  const std::size_t feat = static_cast<std::size_t>(x.channels) * x.plane();
  Matrix m(static_cast<std::size_t>(x.count), feat);
  for (int c = 0; c < x.channels; ++c)
    for (int n = 0; n < x.count; ++n) {
      const double* src = x.values.data() + (static_cast<std::size_t>(c) * x.count + n) * x.plane();
      std::copy(src, src + x.plane(), m.data.data() + static_cast<std::size_t>(n) * feat + c * x.plane());
    }
  return m;
}

Feature4 unflatten(const Matrix& m, int channels, int height, int width) {
  Feature4 x(channels, static_cast<int>(m.rows), height, width);
  if (m.cols != static_cast<std::size_t>(channels) * x.plane()) throw UsageError("unflatten: shape mismatch");
  for (int c = 0; c < channels; ++c)
    for (int n = 0; n < x.count; ++n) {
      const double* src = m.data.data() + static_cast<std::size_t>(n) * m.cols + c * x.plane();
      std::copy(src, src + x.plane(), x.values.data() + (static_cast<std::size_t>(c) * x.count + n) * x.plane());
    }
  return x;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", {static_cast<std::size_t>(out_features), static_cast<std::size_t>(in_features)}),
      bias_(name + ".bias", {static_cast<std::size_t>(out_features)}) {
  if (in_features < 1 || out_features < 1) throw UsageError("Linear: sizes must be positive");
}

void Linear::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  uniform_init(weight_.value, bound, rng);
  uniform_init(bias_.value, bound, rng);
}

Matrix Linear::forward(const Matrix& x, bool keep_cache) {
  if (x.cols != static_cast<std::size_t>(in_)) throw UsageError("Linear: input width mismatch");
  Matrix y(x.rows, static_cast<std::size_t>(out_));
  gemm_nt(x.rows, static_cast<std::size_t>(out_), static_cast<std::size_t>(in_), x.data.data(),
          weight_.value.data(), y.data.data(), false);
  add_row_bias(y, bias_.value);
  if (keep_cache) input_ = x;
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  if (grad_out.rows != input_.rows || grad_out.cols != static_cast<std::size_t>(out_))
    throw UsageError("Linear::backward without matching forward");
  gemm_tn(static_cast<std::size_t>(out_), static_cast<std::size_t>(in_), grad_out.rows, grad_out.data.data(),
          input_.data.data(), weight_.grad.data(), true);
  accumulate_column_sums(grad_out, bias_.grad);
  Matrix dx(grad_out.rows, static_cast<std::size_t>(in_));
  gemm_nn(grad_out.rows, static_cast<std::size_t>(in_), static_cast<std::size_t>(out_), grad_out.data.data(),
          weight_.value.data(), dx.data.data(), false);
  return dx;
}

// -------------------------------------------------------------- GruStack

GruStack::GruStack(std::string name, int input_size, int hidden_size, int layers) : hidden_(hidden_size) {
  if (input_size < 1 || hidden_size < 1 || layers < 1) throw UsageError("GruStack: sizes must be positive");
  const auto H3 = static_cast<std::size_t>(3 * hidden_size), H = static_cast<std::size_t>(hidden_size);
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input_size : hidden_size;
    const std::string p = name + ".l" + std::to_string(l);
    cells_.push_back(Cell{Parameter(p + ".weight_ih", {H3, static_cast<std::size_t>(in)}),
                          Parameter(p + ".weight_hh", {H3, H}), Parameter(p + ".bias_ih", {H3}),
                          Parameter(p + ".bias_hh", {H3}), in});
  }
}

void GruStack::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (auto& c : cells_) {
    uniform_init(c.w_ih.value, bound, rng);
    uniform_init(c.w_hh.value, bound, rng);
    uniform_init(c.b_ih.value, bound, rng);
    uniform_init(c.b_hh.value, bound, rng);
  }
}

std::vector<Parameter*> GruStack::parameters() {
  std::vector<Parameter*> out;
  for (auto& c : cells_) out.insert(out.end(), {&c.w_ih, &c.w_hh, &c.b_ih, &c.b_hh});
  return out;
}

std::uint64_t GruStack::macs_per_step() const {
  std::uint64_t m = 0;
  for (const auto& c : cells_) m += 3ull * hidden_ * (c.in + hidden_);
  return m;
}

Matrix GruStack::step(const Matrix& x, std::vector<Matrix>& h, bool keep_cache) {
  if (h.size() != cells_.size()) throw UsageError("GruStack::step: one hidden state per layer required");
  const std::size_t B = x.rows, H = static_cast<std::size_t>(hidden_);
  std::vector<CellCache> caches;
  const Matrix* input = &x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    Cell& c = cells_[l];
    if (input->cols != static_cast<std::size_t>(c.in) || h[l].rows != B || h[l].cols != H)
      throw UsageError("GruStack::step: shape mismatch");
    Matrix gi(B, 3 * H), gh(B, 3 * H);
    gemm_nt(B, 3 * H, static_cast<std::size_t>(c.in), input->data.data(), c.w_ih.value.data(), gi.data.data(), false);
    gemm_nt(B, 3 * H, H, h[l].data.data(), c.w_hh.value.data(), gh.data.data(), false);
    add_row_bias(gi, c.b_ih.value);
    add_row_bias(gh, c.b_hh.value);
    CellCache cc{*input, h[l], Matrix(B, H), Matrix(B, H), Matrix(B, H), Matrix(B, H)};
    Matrix next(B, H);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) {
        const double r = sigmoid(gi(b, j) + gh(b, j));
        const double z = sigmoid(gi(b, H + j) + gh(b, H + j));
        const double ghn = gh(b, 2 * H + j);
        const double n = std::tanh(gi(b, 2 * H + j) + r * ghn);
        next(b, j) = (1.0 - z) * n + z * h[l](b, j);
        cc.r(b, j) = r;
        cc.z(b, j) = z;
        cc.n(b, j) = n;
        cc.gh_n(b, j) = ghn;
      }
    }
    h[l] = std::move(next);
    if (keep_cache) caches.push_back(std::move(cc));
    input = &h[l];
  }
  if (keep_cache) tape_.push_back(std::move(caches));
  return h.back();
}

Matrix GruStack::backward_step(const Matrix& grad_out, std::vector<Matrix>& grad_h) {
  if (tape_.empty()) throw UsageError("GruStack::backward_step: empty tape");
  if (grad_h.size() != cells_.size()) throw UsageError("GruStack::backward_step: one gradient per layer required");
  std::vector<CellCache> caches = std::move(tape_.back());
  tape_.pop_back();
  const std::size_t H = static_cast<std::size_t>(hidden_);
  Matrix from_above = grad_out;
  for (std::size_t li = cells_.size(); li-- > 0;) {
    Cell& c = cells_[li];
    const CellCache& cc = caches[li];
    const std::size_t B = cc.x.rows;
    Matrix dh = grad_h[li];
    for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += from_above.data[i];

    Matrix dgi(B, 3 * H), dgh(B, 3 * H), dh_prev(B, H);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) {
        const double g = dh(b, j), r = cc.r(b, j), z = cc.z(b, j), n = cc.n(b, j);
        const double dn_pre = g * (1.0 - z) * (1.0 - n * n);
        const double dz_pre = g * (cc.h(b, j) - n) * z * (1.0 - z);
        const double dr_pre = dn_pre * cc.gh_n(b, j) * r * (1.0 - r);
        dgi(b, j) = dr_pre;
        dgi(b, H + j) = dz_pre;
        dgi(b, 2 * H + j) = dn_pre;
        dgh(b, j) = dr_pre;
        dgh(b, H + j) = dz_pre;
        dgh(b, 2 * H + j) = dn_pre * r;
        dh_prev(b, j) = g * z;
      }
    }
    gemm_tn(3 * H, static_cast<std::size_t>(c.in), B, dgi.data.data(), cc.x.data.data(), c.w_ih.grad.data(), true);
    gemm_tn(3 * H, H, B, dgh.data.data(), cc.h.data.data(), c.w_hh.grad.data(), true);
    accumulate_column_sums(dgi, c.b_ih.grad);
    accumulate_column_sums(dgh, c.b_hh.grad);
    gemm_nn(B, H, 3 * H, dgh.data.data(), c.w_hh.value.data(), dh_prev.data.data(), true);
    Matrix dx(B, static_cast<std::size_t>(c.in));
    gemm_nn(B, static_cast<std::size_t>(c.in), 3 * H, dgi.data.data(), c.w_ih.value.data(), dx.data.data(), false);
    grad_h[li] = std::move(dh_prev);
    from_above = std::move(dx);
  }
  return from_above;
}

// ---------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(std::string name, int dim, int heads)
    : dim_(dim),
      heads_(heads),
      in_w_(name + ".in_proj_weight", {static_cast<std::size_t>(3 * dim), static_cast<std::size_t>(dim)}),
      in_b_(name + ".in_proj_bias", {static_cast<std::size_t>(3 * dim)}),
      out_w_(name + ".out_proj.weight", {static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)}),
      out_b_(name + ".out_proj.bias", {static_cast<std::size_t>(dim)}) {
  if (heads < 1 || dim % heads != 0) throw UsageError("MultiHeadAttention: heads must divide the model dimension");
}

void MultiHeadAttention::init(std::mt19937_64& rng) {
  uniform_init(in_w_.value, std::sqrt(6.0 / (dim_ + 3.0 * dim_)), rng);
  uniform_init(out_w_.value, 1.0 / std::sqrt(static_cast<double>(dim_)), rng);
}

std::uint64_t MultiHeadAttention::macs(int seq_len) const {
  const std::uint64_t T = static_cast<std::uint64_t>(seq_len), D = static_cast<std::uint64_t>(dim_);
  return T * 3 * D * D + 2 * T * T * D + T * D * D;
}

Matrix MultiHeadAttention::forward(const Matrix& x, int seq_len, bool keep_cache) {
  if (x.cols != static_cast<std::size_t>(dim_) || seq_len < 1 || x.rows % static_cast<std::size_t>(seq_len) != 0)
    throw UsageError("MultiHeadAttention: input shape mismatch");
  const std::size_t D = static_cast<std::size_t>(dim_), T = static_cast<std::size_t>(seq_len);
  const std::size_t groups = x.rows / T, dh = D / static_cast<std::size_t>(heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix qkv(x.rows, 3 * D);
  gemm_nt(x.rows, 3 * D, D, x.data.data(), in_w_.value.data(), qkv.data.data(), false);
  add_row_bias(qkv, in_b_.value);

  Matrix concat(x.rows, D);
  std::vector<Matrix> attn;
  attn.reserve(groups * static_cast<std::size_t>(heads_));
  for (std::size_t g = 0; g < groups; ++g) {
    for (int hd = 0; hd < heads_; ++hd) {
      const std::size_t qo = static_cast<std::size_t>(hd) * dh, ko = D + qo, vo = 2 * D + qo;
      Matrix a(T, T);
      for (std::size_t i = 0; i < T; ++i) {
        const double* q = qkv.data.data() + (g * T + i) * 3 * D + qo;
        double peak = -INFINITY;
        for (std::size_t j = 0; j < T; ++j) {
          const double* k = qkv.data.data() + (g * T + j) * 3 * D + ko;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += q[d] * k[d];
          a(i, j) = s * scale;
          peak = std::max(peak, a(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < T; ++j) total += a(i, j) = std::exp(a(i, j) - peak);
        for (std::size_t j = 0; j < T; ++j) a(i, j) /= total;
        double* o = concat.data.data() + (g * T + i) * D + qo;
        for (std::size_t j = 0; j < T; ++j) {
          const double* v = qkv.data.data() + (g * T + j) * 3 * D + vo;
          for (std::size_t d = 0; d < dh; ++d) o[d] += a(i, j) * v[d];
        }
      }
      attn.push_back(std::move(a));
    }
  }

  Matrix out(x.rows, D);
  gemm_nt(x.rows, D, D, concat.data.data(), out_w_.value.data(), out.data.data(), false);
  add_row_bias(out, out_b_.value);
  seq_len_ = seq_len;
  attn_ = std::move(attn);
  if (keep_cache) {
    x_ = x;
    qkv_ = std::move(qkv);
    concat_ = std::move(concat);
  }
  return out;
}

Matrix MultiHeadAttention::backward(const Matrix& grad_out) {
  if (!grad_out.same_shape(concat_)) throw UsageError("MultiHeadAttention::backward without matching forward");
  const std::size_t D = static_cast<std::size_t>(dim_), T = static_cast<std::size_t>(seq_len_);
  const std::size_t R = grad_out.rows, groups = R / T, dh = D / static_cast<std::size_t>(heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  gemm_tn(D, D, R, grad_out.data.data(), concat_.data.data(), out_w_.grad.data(), true);
  accumulate_column_sums(grad_out, out_b_.grad);
  Matrix dconcat(R, D);
  gemm_nn(R, D, D, grad_out.data.data(), out_w_.value.data(), dconcat.data.data(), false);

  Matrix dqkv(R, 3 * D);
  Matrix da(T, T);
  for (std::size_t g = 0; g < groups; ++g) {
    for (int hd = 0; hd < heads_; ++hd) {
      const Matrix& a = attn_[g * static_cast<std::size_t>(heads_) + static_cast<std::size_t>(hd)];
      const std::size_t qo = static_cast<std::size_t>(hd) * dh, ko = D + qo, vo = 2 * D + qo;
      auto q_at = [&](std::size_t i) { return qkv_.data.data() + (g * T + i) * 3 * D + qo; };
      auto k_at = [&](std::size_t i) { return qkv_.data.data() + (g * T + i) * 3 * D + ko; };
      auto v_at = [&](std::size_t i) { return qkv_.data.data() + (g * T + i) * 3 * D + vo; };
      auto dslot = [&](std::size_t i, std::size_t off) { return dqkv.data.data() + (g * T + i) * 3 * D + off; };
      for (std::size_t i = 0; i < T; ++i) {
        const double* dout = dconcat.data.data() + (g * T + i) * D + qo;
        for (std::size_t j = 0; j < T; ++j) {
          const double* v = v_at(j);
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += dout[d] * v[d];
          da(i, j) = s;
          double* dv = dslot(j, vo);
          for (std::size_t d = 0; d < dh; ++d) dv[d] += a(i, j) * dout[d];
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < T; ++j) dot += da(i, j) * a(i, j);
        for (std::size_t j = 0; j < T; ++j) {
          const double ds = a(i, j) * (da(i, j) - dot) * scale;
          double* dq = dslot(i, qo);
          double* dk = dslot(j, ko);
          const double* k = k_at(j);
          const double* q = q_at(i);
          for (std::size_t d = 0; d < dh; ++d) {
            dq[d] += ds * k[d];
            dk[d] += ds * q[d];
          }
        }
      }
    }
  }
  gemm_tn(3 * D, D, R, dqkv.data.data(), x_.data.data(), in_w_.grad.data(), true);
  accumulate_column_sums(dqkv, in_b_.grad);
  Matrix dx(R, D);
  gemm_nn(R, D, 3 * D, dqkv.data.data(), in_w_.value.data(), dx.data.data(), false);
  return dx;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, int dim)
    : dim_(dim),
      gamma_(name + ".weight", {static_cast<std::size_t>(dim)}),
      beta_(name + ".bias", {static_cast<std::size_t>(dim)}) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
}

Matrix LayerNorm::forward(const Matrix& x, bool keep_cache) {
  if (x.cols != static_cast<std::size_t>(dim_)) throw UsageError("LayerNorm: width mismatch");
  Matrix y(x.rows, x.cols), xhat(x.rows, x.cols);
  std::vector<double> inv(x.rows);
  const double D = static_cast<double>(dim_);
  for (std::size_t r = 0; r < x.rows; ++r) {
    auto row = x.row(r);
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / D;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    inv[r] = 1.0 / std::sqrt(var / D + kEps);
    for (std::size_t c = 0; c < x.cols; ++c) {
      xhat(r, c) = (row[c] - mean) * inv[r];
      y(r, c) = gamma_.value[c] * xhat(r, c) + beta_.value[c];
    }
  }
  if (keep_cache) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv);
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& grad_out) {
  if (!grad_out.same_shape(xhat_)) throw UsageError("LayerNorm::backward without matching forward");
  Matrix dx(grad_out.rows, grad_out.cols);
  const double D = static_cast<double>(dim_);
  for (std::size_t r = 0; r < grad_out.rows; ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < grad_out.cols; ++c) {
      const double g = grad_out(r, c);
      gamma_.grad[c] += g * xhat_(r, c);
      beta_.grad[c] += g;
      const double dxh = g * gamma_.value[c];
      mean_d += dxh;
      mean_dx += dxh * xhat_(r, c);
    }
    mean_d /= D;
    mean_dx /= D;
    for (std::size_t c = 0; c < grad_out.cols; ++c)
      dx(r, c) = inv_std_[r] * (grad_out(r, c) * gamma_.value[c] - mean_d - xhat_(r, c) * mean_dx);
  }
  return dx;
}

}  // namespace beamkd::nn
