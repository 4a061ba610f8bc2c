#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "beamkd/checkpoint.hpp"
#include "beamkd/dataset.hpp"
#include "beamkd/losses.hpp"
#include "beamkd/models.hpp"
#include "json.hpp"

namespace beamkd::train {

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  double initial_lr = 1e-4;
  double min_lr = 1e-6;
  int cycle_epochs = 10;
  double weight_decay = 1e-4;
  double grad_clip_norm = 10.0;
  int patience = 20;
  std::uint64_t seed = 0;
  loss::KdConfig kd;
  loss::FocalConfig focal;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string train_config_digest(const TrainConfig& c);

/// Cyclic cosine schedule; `epoch` counts from 0 and may be fractional.
double lr_at(double epoch, const TrainConfig& cfg);

/// Table IV defaults for a student window length; lengths without an entry
/// use the nearest listed one.
loss::KdConfig student_kd_defaults(int student_length);

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_loss = 0;
  double train_task = 0;
  double train_distill = 0;
  double val_loss = 0;
  double lr = 0;
  double max_grad_norm = 0;  ///< largest post-clip gradient norm in the epoch
  double wall_seconds = 0;
};

nlohmann::ordered_json to_json(const EpochRecord& r, bool with_timing);

/// Samples addressed by a model: record windows, their masks, and the subset
/// in use.
struct DataView {
  std::span<const data::Sample> samples;
  const data::MaskBank* bank = nullptr;
  std::vector<std::size_t> ids;
};

/// Mean focal loss per slot over the view (evaluation mode).
double validate(model::BeamTracker& model, const DataView& view, const TrainConfig& cfg);

/// Evaluation-mode logits for every sample of the view, [M*(J+1) x C].
nn::Matrix predict(model::BeamTracker& model, const DataView& view, int batch_size);

/// Best-validation tracking.  Stops once `patience` epochs have passed
/// without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when `val_loss` is a new best.
  bool update(int epoch, double val_loss);
  bool should_stop(int epoch) const { return epoch - best_epoch_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  nlohmann::ordered_json run_config = nlohmann::ordered_json::object();
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  ckpt::CheckpointBundle best;
  std::vector<EpochRecord> history;
  long teacher_forward_calls = 0;
  double max_grad_norm = 0;  ///< over all steps, after clipping
  int best_epoch = 0;
};

/// Training loop with validation-driven best-model tracking and early
/// stopping.  On return `model` holds the best parameters.  With
/// cfg.kd.beta > 0 the frozen `teacher` is run once per training sample on
/// its own (full) window.
FitResult fit(model::BeamTracker& model, const DataView& train, const DataView& validation, const TrainConfig& cfg,
              model::BeamTracker* teacher, const FitOptions& options = {});

void write_run_log(std::span<const EpochRecord> history, const std::filesystem::path& path);
void write_timing_log(std::span<const EpochRecord> history, const std::filesystem::path& path);

enum class Stage { kVanilla, kSelfKd, kKd };
std::string stage_name(Stage s);
Stage parse_stage(const std::string& s);

/// Model-initialisation seed for a stage, distinct per stage.
std::uint64_t stage_seed(std::uint64_t seed, Stage s);

struct PipelineInputs {
  std::span<const data::Sample> samples;
  const data::MaskBank* bank = nullptr;
  data::Split split;
  model::ModelConfig teacher;
  model::ModelConfig student;
  TrainConfig train;
  loss::KdConfig self_kd{0.3, 2.0};
  loss::KdConfig student_kd{0.3, 5.0};
  nlohmann::ordered_json run_config = nlohmann::ordered_json::object();
};

struct PipelineResult {
  FitResult teacher_vanilla;
  FitResult teacher_selfkd;
  FitResult student;
};

/// Vanilla teacher, then a freshly initialised teacher distilled from it,
/// then the student distilled from the refined teacher.
PipelineResult run_pipeline(const PipelineInputs& in);

}  // namespace beamkd::train
