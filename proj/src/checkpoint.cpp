#include "beamkd/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace beamkd::ckpt {

namespace {

constexpr const char* kMagic = "BEAMKD-CHECKPOINT";

using Kind = CheckpointError::Kind;

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void put_f32(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::vector<NamedArray> capture(model::BeamTracker& model) {
  std::vector<NamedArray> out;
  for (const auto* p : model.parameters()) {
    NamedArray a{p->name, p->shape, {}};
    a.values.reserve(p->value.size());
    for (double v : p->value) a.values.push_back(static_cast<float>(v));
    out.push_back(std::move(a));
  }
  return out;
}

void restore(const CheckpointBundle& bundle, model::BeamTracker& model) {
  if (model::config_digest(bundle.config) != model::config_digest(model.config()))
    throw CheckpointError(Kind::kDigest, "checkpoint model config digest " + model::config_digest(bundle.config) +
                                             " does not match the target model " + model::config_digest(model.config()));
  auto params = model.parameters();
  if (params.size() != bundle.arrays.size())
    throw CheckpointError(Kind::kFormat, "checkpoint holds " + std::to_string(bundle.arrays.size()) +
                                             " arrays, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = bundle.arrays[i];
    if (a.name != params[i]->name || a.shape != params[i]->shape || a.values.size() != params[i]->value.size())
      throw CheckpointError(Kind::kFormat, "checkpoint array '" + a.name + "' does not match model array '" +
                                               params[i]->name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = bundle.arrays[i];
    for (std::size_t k = 0; k < a.values.size(); ++k) params[i]->value[k] = static_cast<double>(a.values[k]);
  }
}

std::string serialize(const CheckpointBundle& b) {
  nlohmann::ordered_json h;
  h["format_version"] = b.format_version;
  h["model"] = model::to_json(b.config);
  h["model_digest"] = model::config_digest(b.config);
  h["epoch"] = b.epoch;
  if (std::isfinite(b.best_val_loss)) h["best_val_loss"] = b.best_val_loss;
  else h["best_val_loss"] = nullptr;
  h["seed"] = b.seed;
  h["rng_state"] = b.rng_state;
  h["train_config_digest"] = b.train_config_digest;
  h["run_config"] = b.run_config;
  auto arrays = nlohmann::ordered_json::array();
  for (const auto& a : b.arrays) {
    if (a.values.size() != element_count(a.shape)) throw UsageError("array '" + a.name + "' size does not match its shape");
    arrays.push_back({{"name", a.name}, {"shape", a.shape}});
  }
  h["arrays"] = arrays;
  const std::string header = h.dump();

  std::string out = std::string(kMagic) + "\n" + std::to_string(header.size()) + "\n" + header;
  for (const auto& a : b.arrays)
    for (float v : a.values) put_f32(out, v);
  return out;
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize(bundle);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

CheckpointBundle parse(const std::string& bytes, const std::string& origin) {
  const std::string magic_line = std::string(kMagic) + "\n";
  if (bytes.compare(0, magic_line.size(), magic_line) != 0)
    throw CheckpointError(Kind::kFormat, origin + ": not a checkpoint file");
  std::size_t pos = magic_line.size();
  const auto eol = bytes.find('\n', pos);
  if (eol == std::string::npos) throw CheckpointError(Kind::kTruncated, origin + ": truncated before the header");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(bytes.substr(pos, eol - pos));
  } catch (const std::exception&) {
    throw CheckpointError(Kind::kFormat, origin + ": bad header length");
  }
  pos = eol + 1;
  if (bytes.size() - pos < header_len) throw CheckpointError(Kind::kTruncated, origin + ": truncated header");

  nlohmann::ordered_json h;
  try {
    h = nlohmann::ordered_json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kFormat, origin + ": header is not valid JSON: " + e.what());
  }
  pos += header_len;

  CheckpointBundle b;
  try {
    b.format_version = h.at("format_version").get<int>();
    if (b.format_version != kFormatVersion)
      throw CheckpointError(Kind::kVersion, origin + ": unsupported format_version " +
                                                std::to_string(b.format_version) + " (expected " +
                                                std::to_string(kFormatVersion) + ")");
    b.config = model::model_config_from_json(nlohmann::json(h.at("model")));
    const auto stored = h.at("model_digest").get<std::string>();
    if (stored != model::config_digest(b.config))
      throw CheckpointError(Kind::kDigest, origin + ": header model digest does not match its model config");
    b.epoch = h.at("epoch").get<int>();
    b.best_val_loss = h.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                      : h.at("best_val_loss").get<double>();
    b.seed = h.at("seed").get<std::uint64_t>();
    b.rng_state = h.at("rng_state").get<std::string>();
    b.train_config_digest = h.at("train_config_digest").get<std::string>();
    b.run_config = h.at("run_config");
    for (const auto& a : h.at("arrays")) {
      NamedArray arr{a.at("name").get<std::string>(), a.at("shape").get<std::vector<std::size_t>>(), {}};
      b.arrays.push_back(std::move(arr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kFormat, origin + ": malformed header: " + e.what());
  }

  for (auto& a : b.arrays) {
    const std::size_t n = element_count(a.shape);
    if (bytes.size() - pos < 4 * n)
      throw CheckpointError(Kind::kTruncated, origin + ": truncated while reading array '" + a.name + "' (need " +
                                                  std::to_string(4 * n) + " bytes, " +
                                                  std::to_string(bytes.size() - pos) + " left)");
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.values[i] = get_f32(bytes.data() + pos + 4 * i);
    pos += 4 * n;
  }
  if (pos != bytes.size()) {
    const std::string last = b.arrays.empty() ? std::string("<header>") : b.arrays.back().name;
    throw CheckpointError(Kind::kTruncated, origin + ": " + std::to_string(bytes.size() - pos) +
                                                " unexpected trailing bytes after array '" + last + "'");
  }
  return b;
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path, const model::ModelConfig& expected) {
  auto b = load_checkpoint(path);
  if (model::config_digest(b.config) != model::config_digest(expected))
    throw CheckpointError(Kind::kDigest, path.string() + ": model config digest " + model::config_digest(b.config) +
                                             " does not match the requested " + model::config_digest(expected));
  return b;
}

std::unique_ptr<model::BeamTracker> instantiate(const CheckpointBundle& bundle) {
  auto m = std::make_unique<model::BeamTracker>(bundle.config, bundle.seed);
  restore(bundle, *m);
  return m;
}

}  // namespace beamkd::ckpt
