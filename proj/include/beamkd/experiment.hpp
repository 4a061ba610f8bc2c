#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "beamkd/dataset.hpp"
#include "beamkd/models.hpp"
#include "beamkd/preprocess.hpp"
#include "beamkd/synthetic_scene.hpp"
#include "beamkd/training.hpp"
#include "json.hpp"

// Experiment configuration: everything a CLI run needs, one JSON document.

namespace beamkd::exp {

enum class ModelScale { kDesk, kPaper };

struct ExperimentConfig {
  std::string name = "custom";
  scene::SceneConfig scene;
  preprocess::PreprocessConfig preprocess;
  int input_length = 8;    ///< teacher window (masks)
  int student_length = 8;  ///< student window (masks), <= input_length
  int horizon = 6;
  int num_classes = 64;
  ModelScale scale = ModelScale::kPaper;
  data::SplitSpec split;
  train::TrainConfig train;
  loss::KdConfig self_kd{0.3, 2.0};
  loss::KdConfig student_kd{0.3, 5.0};
  double delta = 5.0;

  void validate() const;
  model::ModelConfig teacher_model() const;
  model::ModelConfig student_model() const;
  /// Train config for a stage with that stage's (beta, temperature).
  train::TrainConfig stage_train(train::Stage stage) const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Built-in presets: desk-synthetic, paper-teacher, paper-student-L8,
/// paper-student-L5, paper-student-L3.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

/// The synthetic scene rendered, windowed, masked and split in memory.
struct SyntheticWorld {
  std::vector<data::FrameRecord> records;  ///< labels set, no image paths
  std::vector<data::Sample> samples;
  data::MaskBank bank;
  data::Split split;

  train::DataView train_view() const { return {samples, &bank, split.train}; }
  train::DataView validation_view() const { return {samples, &bank, split.validation}; }
};
SyntheticWorld build_synthetic(const ExperimentConfig& c);

}  // namespace beamkd::exp
