#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "beamkd/beam_oracle.hpp"
#include "beamkd/nn/layers.hpp"
#include "beamkd/preprocess.hpp"
#include "json.hpp"

// Sequence-to-sequence beam classifiers.
//
//   masks [B][L][H][W] -> CNN embedding (per mask) -> features [B*L x D]
//   -> encoder GRU over L steps -> decoder GRU for J+1 steps
//      (step 0 fed f[t], later steps fed the previous decoder output)
//   -> teacher only: LayerNorm(reps + MHA(reps))
//   -> per-slot head Linear(D,128) -> ReLU -> Linear(128,C)
//
// Batched outputs are row-major [B*(J+1) x C] with row b*(J+1)+j.

namespace beamkd::model {

enum class Role { kTeacher, kStudent };

std::string role_name(Role r);
Role parse_role(const std::string& s);

struct ConvSpec {
  int out_channels = 16;
  int kernel = 3;
  int stride = 2;
};

struct ModelConfig {
  Role role = Role::kTeacher;
  int input_height = 64;
  int input_width = 64;
  int input_length = 8;  ///< masks consumed per sample
  int horizon = 6;       ///< J; the model predicts J+1 slots
  int num_classes = 64;
  int feature_dim = 64;
  int hidden_dim = 64;
  int gru_layers = 2;
  int mha_heads = 8;  ///< 0 for the student
  std::vector<ConvSpec> cnn;
  int pool_height = 4;  ///< student adaptive max-pool grid
  int pool_width = 4;
  int head_hidden = 128;

  int slots() const { return horizon + 1; }
  void validate() const;

  /// Desk-scale plans: teacher 1->16->32->64->64->64 with BN, student
  /// 1->16->32->32 with adaptive max pooling.
  static ModelConfig teacher(int height, int width, int input_length, int horizon, int num_classes);
  static ModelConfig student(int height, int width, int input_length, int horizon, int num_classes);
  /// Wider plans for 54x96 DeepSense-scale inputs.
  static ModelConfig paper_teacher(int input_length = 8, int horizon = 6, int num_classes = 64);
  static ModelConfig paper_student(int input_length = 8, int horizon = 6, int num_classes = 64);
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical JSON form.
std::string config_digest(const ModelConfig& c);

class BeamTracker {
 public:
  BeamTracker(ModelConfig config, std::uint64_t seed);
  ~BeamTracker();
  BeamTracker(const BeamTracker&) = delete;
  BeamTracker& operator=(const BeamTracker&) = delete;

  const ModelConfig& config() const { return config_; }

  struct Output {
    nn::Matrix logits;         ///< [B*(J+1) x C]
    nn::Matrix probabilities;  ///< row-wise softmax of logits
  };

  /// Full forward pass.  `training` selects batch statistics and records
  /// the caches needed by backward().
  Output forward(const preprocess::MaskBatch& masks, bool training);

  /// Backpropagates dL/dlogits from the last training forward and
  /// accumulates parameter gradients.
  void backward(const nn::Matrix& grad_logits);

  // Individual stages, exposed for inspection and tests.
  nn::Matrix embed(const preprocess::MaskBatch& masks, bool training);
  nn::Matrix decode(const nn::Matrix& features, int batch, bool training);
  nn::Matrix refine(const nn::Matrix& reps, bool training);
  nn::Matrix classify(const nn::Matrix& reps, bool training);

  /// Every named array, including running statistics, in a fixed order.
  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> trainable_parameters();
  nn::Parameter* find(const std::string& name);
  void zero_grad();

  /// Multiply-accumulate count of one sample's forward pass.
  std::uint64_t macs_per_sample() const;

  const nn::MultiHeadAttention* attention() const;

 private:
  struct Impl;
  ModelConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Number of trainable scalars.
std::size_t count_parameters(std::span<nn::Parameter* const> params);
std::size_t count_parameters(BeamTracker& model);

/// Row-wise softmax.
nn::Matrix softmax_rows(const nn::Matrix& logits);

/// P[t] for sample b as a C x (J+1) column-stochastic matrix.
nn::Matrix probability_matrix(const nn::Matrix& batched_probabilities, int sample, int slots);

/// Column-wise argmax of a C x (J+1) matrix, lowest index on ties.
beam::BeamLabelVector predicted_beams(const nn::Matrix& probability_matrix);

}  // namespace beamkd::model
