#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beamkd/digest.hpp"
#include "beamkd/errors.hpp"
#include "beamkd/models.hpp"
#include "json.hpp"

// Checkpoint archive:
//
//   line 1  "BEAMKD-CHECKPOINT"
//   line 2  decimal byte length of the header
//   header  compact JSON: format_version, model, model_digest, epoch,
//           best_val_loss (null for +inf), seed, rng_state,
//           train_config_digest, run_config, arrays [{name, shape}]
//   payload every array in header order as little-endian float32

namespace beamkd::ckpt {

inline constexpr int kFormatVersion = 1;

class CheckpointError : public IoError {
 public:
  enum class Kind { kFormat, kVersion, kDigest, kTruncated };
  CheckpointError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct CheckpointBundle {
  int format_version = kFormatVersion;
  model::ModelConfig config;
  std::vector<NamedArray> arrays;
  int epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t seed = 0;
  std::string rng_state;
  std::string train_config_digest;
  nlohmann::ordered_json run_config = nlohmann::ordered_json::object();
};

/// Snapshot of every named array of `model`.
std::vector<NamedArray> capture(model::BeamTracker& model);

/// Copies arrays into `model`.  Validates the config digest and every
/// name/shape before touching any parameter.
void restore(const CheckpointBundle& bundle, model::BeamTracker& model);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
std::string serialize(const CheckpointBundle& bundle);

CheckpointBundle load_checkpoint(const std::filesystem::path& path);
/// Also requires the stored model config digest to match `expected`.
CheckpointBundle load_checkpoint(const std::filesystem::path& path, const model::ModelConfig& expected);
CheckpointBundle parse(const std::string& bytes, const std::string& origin);

/// Builds a model from a bundle.
std::unique_ptr<model::BeamTracker> instantiate(const CheckpointBundle& bundle);

using beamkd::fnv1a_hex;
std::string file_digest(const std::filesystem::path& path);

}  // namespace beamkd::ckpt
