#include "beamkd/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "beamkd/digest.hpp"
#include "beamkd/errors.hpp"

namespace beamkd::model {

using nn::Feature4;
using nn::Matrix;

std::string role_name(Role r) { return r == Role::kTeacher ? "teacher" : "student"; }

Role parse_role(const std::string& s) {
  if (s == "teacher") return Role::kTeacher;
  if (s == "student") return Role::kStudent;
  throw UsageError("role must be 'teacher' or 'student', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_height < 1 || input_width < 1) throw UsageError("ModelConfig: input dimensions must be positive");
  if (input_length < 1) throw UsageError("ModelConfig: input_length must be >= 1");
  if (horizon < 0) throw UsageError("ModelConfig: horizon must be >= 0");
  if (num_classes < 1) throw UsageError("ModelConfig: num_classes must be >= 1");
  if (feature_dim < 1 || hidden_dim < 1 || head_hidden < 1) throw UsageError("ModelConfig: widths must be positive");
  if (feature_dim != hidden_dim)
    throw UsageError("ModelConfig: feature_dim must equal hidden_dim (decoder feeds its output back)");
  if (gru_layers < 1) throw UsageError("ModelConfig: gru_layers must be >= 1");
  if (cnn.empty()) throw UsageError("ModelConfig: cnn plan is empty");
  if (role == Role::kTeacher) {
    if (mha_heads < 1 || hidden_dim % mha_heads != 0)
      throw UsageError("ModelConfig: attention heads must divide the hidden size");
  } else {
    if (mha_heads != 0) throw UsageError("ModelConfig: the student has no attention block (mha_heads = 0)");
    if (pool_height < 1 || pool_width < 1) throw UsageError("ModelConfig: pool grid must be positive");
  }
  int h = input_height, w = input_width;
  for (const auto& c : cnn) {
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1) throw UsageError("ModelConfig: invalid conv layer");
    h = (h + 2 * (c.kernel / 2) - c.kernel) / c.stride + 1;
    w = (w + 2 * (c.kernel / 2) - c.kernel) / c.stride + 1;
    if (h < 1 || w < 1) throw UsageError("ModelConfig: input too small for the conv plan");
  }
}

ModelConfig ModelConfig::teacher(int height, int width, int input_length, int horizon, int num_classes) {
  ModelConfig c;
  c.role = Role::kTeacher;
  c.input_height = height;
  c.input_width = width;
  c.input_length = input_length;
  c.horizon = horizon;
  c.num_classes = num_classes;
  c.gru_layers = 2;
  c.mha_heads = 8;
  c.cnn = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}, {64, 3, 2}, {64, 3, 2}};
  return c;
}

ModelConfig ModelConfig::student(int height, int width, int input_length, int horizon, int num_classes) {
  ModelConfig c;
  c.role = Role::kStudent;
  c.input_height = height;
  c.input_width = width;
  c.input_length = input_length;
  c.horizon = horizon;
  c.num_classes = num_classes;
  c.gru_layers = 1;
  c.mha_heads = 0;
  c.cnn = {{16, 3, 2}, {32, 3, 2}, {32, 3, 2}};
  return c;
}

ModelConfig ModelConfig::paper_teacher(int input_length, int horizon, int num_classes) {
  ModelConfig c = teacher(54, 96, input_length, horizon, num_classes);
  c.cnn = {{32, 3, 2}, {64, 3, 2}, {128, 3, 2}, {256, 3, 2}, {512, 3, 2}};
  return c;
}

ModelConfig ModelConfig::paper_student(int input_length, int horizon, int num_classes) {
  ModelConfig c = student(54, 96, input_length, horizon, num_classes);
  c.cnn = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  return c;
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["role"] = role_name(c.role);
  j["input_height"] = c.input_height;
  j["input_width"] = c.input_width;
  j["input_length"] = c.input_length;
  j["horizon"] = c.horizon;
  j["num_classes"] = c.num_classes;
  j["feature_dim"] = c.feature_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["gru_layers"] = c.gru_layers;
  j["mha_heads"] = c.mha_heads;
  auto cnn = nlohmann::ordered_json::array();
  for (const auto& l : c.cnn) cnn.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  j["cnn"] = cnn;
  j["pool_height"] = c.pool_height;
  j["pool_width"] = c.pool_width;
  j["head_hidden"] = c.head_hidden;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.role = parse_role(j.at("role").get<std::string>());
    c.input_height = j.at("input_height").get<int>();
    c.input_width = j.at("input_width").get<int>();
    c.input_length = j.at("input_length").get<int>();
    c.horizon = j.at("horizon").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.feature_dim = j.value("feature_dim", 64);
    c.hidden_dim = j.value("hidden_dim", 64);
    c.gru_layers = j.at("gru_layers").get<int>();
    c.mha_heads = j.at("mha_heads").get<int>();
    for (const auto& l : j.at("cnn"))
      c.cnn.push_back({l.at("out_channels").get<int>(), l.value("kernel", 3), l.value("stride", 2)});
    c.pool_height = j.value("pool_height", 4);
    c.pool_width = j.value("pool_width", 4);
    c.head_hidden = j.value("head_hidden", 128);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("model config: ") + e.what());
  }
}

std::string config_digest(const ModelConfig& c) {
  return fnv1a_hex(to_json(c).dump());
}

// ------------------------------------------------------------------ model

struct BeamTracker::Impl {
  std::vector<nn::Conv2d> convs;
  std::vector<nn::BatchNorm2d> norms;  // teacher only
  std::vector<nn::Relu> relus;
  std::optional<nn::AdaptiveMaxPool2d> pool;  // student only
  nn::Linear embed_fc;
  nn::GruStack encoder, decoder;
  std::optional<nn::MultiHeadAttention> mha;
  std::optional<nn::LayerNorm> attn_norm;
  nn::Linear head_fc1, head_fc2;
  nn::Relu head_relu;

  // Spatial dims of the last conv output (flatten geometry).
  int flat_c = 0, flat_h = 0, flat_w = 0;
  int batch = 0;

  Impl(const ModelConfig& c, int flat_features)
      : embed_fc("embed.fc", flat_features, c.feature_dim),
        encoder("encoder", c.feature_dim, c.hidden_dim, c.gru_layers),
        decoder("decoder", c.hidden_dim, c.hidden_dim, c.gru_layers),
        head_fc1("head.fc1", c.hidden_dim, c.head_hidden),
        head_fc2("head.fc2", c.head_hidden, c.num_classes) {}
};

namespace {

int conv_out(int in, const ConvSpec& s) { return (in + 2 * (s.kernel / 2) - s.kernel) / s.stride + 1; }

Matrix gather_rows(const Matrix& m, int batch, int period, int offset) {
  Matrix out(static_cast<std::size_t>(batch), m.cols);
  for (int b = 0; b < batch; ++b) {
    const auto src = m.row(static_cast<std::size_t>(b) * period + offset);
    std::copy(src.begin(), src.end(), out.row(static_cast<std::size_t>(b)).begin());
  }
  return out;
}

void scatter_add_rows(Matrix& m, const Matrix& rows, int period, int offset) {
  for (std::size_t b = 0; b < rows.rows; ++b) {
    auto dst = m.row(b * static_cast<std::size_t>(period) + static_cast<std::size_t>(offset));
    const auto src = rows.row(b);
    for (std::size_t c = 0; c < rows.cols; ++c) dst[c] += src[c];
  }
}

}  // namespace

BeamTracker::BeamTracker(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  int c = 1, h = config_.input_height, w = config_.input_width;
  for (const auto& s : config_.cnn) {
    h = conv_out(h, s);
    w = conv_out(w, s);
    c = s.out_channels;
  }
  const bool teacher = config_.role == Role::kTeacher;
  if (!teacher) {
    h = config_.pool_height;
    w = config_.pool_width;
  }
  impl_ = std::make_unique<Impl>(config_, c * h * w);
  impl_->flat_c = c;
  impl_->flat_h = h;
  impl_->flat_w = w;

  int in_c = 1;
  for (std::size_t i = 0; i < config_.cnn.size(); ++i) {
    const auto& s = config_.cnn[i];
    impl_->convs.emplace_back("embed.conv" + std::to_string(i), in_c, s.out_channels, s.kernel, s.stride);
    if (teacher) impl_->norms.emplace_back("embed.bn" + std::to_string(i), s.out_channels);
    impl_->relus.emplace_back();
    in_c = s.out_channels;
  }
  if (teacher) {
    impl_->mha.emplace("attention", config_.hidden_dim, config_.mha_heads);
    impl_->attn_norm.emplace("attention.norm", config_.hidden_dim);
  } else {
    impl_->pool.emplace(config_.pool_height, config_.pool_width);
  }

  std::mt19937_64 rng(seed);
  for (auto& conv : impl_->convs) conv.init(rng);
  impl_->embed_fc.init(rng);
  impl_->encoder.init(rng);
  impl_->decoder.init(rng);
  if (impl_->mha) impl_->mha->init(rng);
  impl_->head_fc1.init(rng);
  impl_->head_fc2.init(rng);
}

BeamTracker::~BeamTracker() = default;

const nn::MultiHeadAttention* BeamTracker::attention() const { return impl_->mha ? &*impl_->mha : nullptr; }

Matrix BeamTracker::embed(const preprocess::MaskBatch& masks, bool training) {
  if (masks.height != config_.input_height || masks.width != config_.input_width)
    throw UsageError("embed: mask dimensions do not match the model");
  if (masks.values.size() != static_cast<std::size_t>(masks.batch) * masks.length * masks.image_size())
    throw UsageError("embed: mask batch is malformed");
  Feature4 x(1, masks.batch * masks.length, masks.height, masks.width);
  x.values = masks.values;
  auto& m = *impl_;
  for (std::size_t i = 0; i < m.convs.size(); ++i) {
    x = m.convs[i].forward(x, training);
    if (!m.norms.empty()) x = m.norms[i].forward(x, training);
    m.relus[i].forward(x.values, training);
  }
  if (m.pool) x = m.pool->forward(x, training);
  return m.embed_fc.forward(nn::flatten(x), training);
}

Matrix BeamTracker::decode(const Matrix& features, int batch, bool training) {
  const int L = static_cast<int>(features.rows) / std::max(batch, 1);
  if (batch < 1 || features.rows != static_cast<std::size_t>(batch) * L || L < 1 ||
      features.cols != static_cast<std::size_t>(config_.feature_dim))
    throw UsageError("decode: feature matrix shape mismatch");
  auto& m = *impl_;
  m.batch = batch;
  const auto B = static_cast<std::size_t>(batch), H = static_cast<std::size_t>(config_.hidden_dim);
  m.encoder.clear_tape();
  m.decoder.clear_tape();

  std::vector<Matrix> h(static_cast<std::size_t>(config_.gru_layers), Matrix(B, H));
  for (int l = 0; l < L; ++l) m.encoder.step(gather_rows(features, batch, L, l), h, training);

  const int T = config_.slots();
  Matrix reps(B * static_cast<std::size_t>(T), H);
  Matrix input = gather_rows(features, batch, L, L - 1);
  for (int j = 0; j < T; ++j) {
    Matrix out = m.decoder.step(input, h, training);
    scatter_add_rows(reps, out, T, j);
    input = std::move(out);
  }
  return reps;
}

Matrix BeamTracker::refine(const Matrix& reps, bool training) {
  auto& m = *impl_;
  if (!m.mha) return reps;
  Matrix s = m.mha->forward(reps, config_.slots(), training);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] += reps.data[i];
  return m.attn_norm->forward(s, training);
}

Matrix BeamTracker::classify(const Matrix& reps, bool training) {
  auto& m = *impl_;
  Matrix hidden = m.head_fc1.forward(reps, training);
  m.head_relu.forward(hidden.data, training);
  return m.head_fc2.forward(hidden, training);
}

BeamTracker::Output BeamTracker::forward(const preprocess::MaskBatch& masks, bool training) {
  if (masks.length != config_.input_length)
    throw UsageError("forward: model expects " + std::to_string(config_.input_length) + " masks per sample, got " +
                     std::to_string(masks.length));
  Matrix features = embed(masks, training);
  Matrix reps = refine(decode(features, masks.batch, training), training);
  Output out;
  out.logits = classify(reps, training);
  out.probabilities = softmax_rows(out.logits);
  return out;
}

void BeamTracker::backward(const Matrix& grad_logits) {
  auto& m = *impl_;
  const int T = config_.slots();
  const int B = m.batch;
  const int L = config_.input_length;
  const auto H = static_cast<std::size_t>(config_.hidden_dim);

  Matrix g = m.head_fc2.backward(grad_logits);
  m.head_relu.backward(g.data);
  g = m.head_fc1.backward(g);
  if (m.mha) {
    Matrix ds = m.attn_norm->backward(g);
    g = m.mha->backward(ds);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += ds.data[i];
  }

  // Decoder, newest step first; step j>=1 was fed output j-1.
  Matrix dfeat(static_cast<std::size_t>(B) * L, H);
  std::vector<Matrix> dh(static_cast<std::size_t>(config_.gru_layers), Matrix(static_cast<std::size_t>(B), H));
  Matrix carry(static_cast<std::size_t>(B), H);
  for (int j = T - 1; j >= 0; --j) {
    Matrix gout = gather_rows(g, B, T, j);
    for (std::size_t i = 0; i < gout.data.size(); ++i) gout.data[i] += carry.data[i];
    Matrix dx = m.decoder.backward_step(gout, dh);
    if (j > 0) carry = std::move(dx);
    else scatter_add_rows(dfeat, dx, L, L - 1);
  }
  const Matrix zero(static_cast<std::size_t>(B), H);
  for (int l = L - 1; l >= 0; --l) scatter_add_rows(dfeat, m.encoder.backward_step(zero, dh), L, l);

  Matrix dflat = m.embed_fc.backward(dfeat);
  const int fc = m.flat_c, fh = m.flat_h, fw = m.flat_w;
  Feature4 dx = nn::unflatten(dflat, fc, fh, fw);
  if (m.pool) dx = m.pool->backward(dx);
  for (std::size_t i = m.convs.size(); i-- > 0;) {
    m.relus[i].backward(dx.values);
    if (!m.norms.empty()) dx = m.norms[i].backward(dx);
    dx = m.convs[i].backward(dx, i > 0);
  }
}

std::vector<nn::Parameter*> BeamTracker::parameters() {
  auto& m = *impl_;
  std::vector<nn::Parameter*> out;
  auto add = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (std::size_t i = 0; i < m.convs.size(); ++i) {
    add(m.convs[i].parameters());
    if (!m.norms.empty()) add(m.norms[i].parameters());
  }
  add(m.embed_fc.parameters());
  add(m.encoder.parameters());
  add(m.decoder.parameters());
  if (m.mha) {
    add(m.mha->parameters());
    add(m.attn_norm->parameters());
  }
  add(m.head_fc1.parameters());
  add(m.head_fc2.parameters());
  return out;
}

std::vector<nn::Parameter*> BeamTracker::trainable_parameters() {
  auto all = parameters();
  std::erase_if(all, [](const nn::Parameter* p) { return !p->trainable; });
  return all;
}

nn::Parameter* BeamTracker::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void BeamTracker::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::uint64_t BeamTracker::macs_per_sample() const {
  const auto& m = *impl_;
  std::uint64_t per_mask = 0;
  int h = config_.input_height, w = config_.input_width;
  for (std::size_t i = 0; i < m.convs.size(); ++i) {
    per_mask += m.convs[i].macs(h, w);
    h = m.convs[i].out_size(h);
    w = m.convs[i].out_size(w);
  }
  per_mask += static_cast<std::uint64_t>(m.embed_fc.in_features()) * m.embed_fc.out_features();
  const auto L = static_cast<std::uint64_t>(config_.input_length), T = static_cast<std::uint64_t>(config_.slots());
  std::uint64_t total = per_mask * L;
  total += m.encoder.macs_per_step() * L + m.decoder.macs_per_step() * T;
  if (m.mha) total += m.mha->macs(config_.slots());
  total += T * (static_cast<std::uint64_t>(m.head_fc1.in_features()) * m.head_fc1.out_features() +
                static_cast<std::uint64_t>(m.head_fc2.in_features()) * m.head_fc2.out_features());
  return total;
}

std::size_t count_parameters(std::span<nn::Parameter* const> params) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (p->trainable) n += p->size();
  return n;
}

std::size_t count_parameters(BeamTracker& model) { return count_parameters(model.parameters()); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto z = logits.row(r);
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) total += p(r, c) = std::exp(z[c] - peak);
    for (std::size_t c = 0; c < z.size(); ++c) p(r, c) /= total;
  }
  return p;
}

Matrix probability_matrix(const Matrix& batched, int sample, int slots) {
  Matrix out(batched.cols, static_cast<std::size_t>(slots));
  for (int j = 0; j < slots; ++j) {
    const auto row = batched.row(static_cast<std::size_t>(sample) * slots + j);
    for (std::size_t c = 0; c < batched.cols; ++c) out(c, static_cast<std::size_t>(j)) = row[c];
  }
  return out;
}

beam::BeamLabelVector predicted_beams(const Matrix& p) {
  beam::BeamLabelVector out;
  for (std::size_t j = 0; j < p.cols; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.rows; ++c)
      if (p(c, j) > p(best, j)) best = c;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

}  // namespace beamkd::model
