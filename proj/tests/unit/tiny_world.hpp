#pragma once

#include "beamkd/experiment.hpp"

// A small synthetic experiment that trains in seconds.

namespace tiny {

inline beamkd::exp::ExperimentConfig config() {
  beamkd::exp::ExperimentConfig c = beamkd::exp::preset("desk-synthetic");
  c.name = "tiny";
  c.scene.frame_height = c.scene.frame_width = 32;
  c.scene.object_height = c.scene.object_width = 5;
  c.scene.n_distractors = 1;
  c.scene.frames_per_sequence = 12;
  c.scene.n_sequences = 8;
  c.scene.codebook_size = 8;
  c.preprocess = {32, 32, 0.1};
  c.input_length = 3;
  c.student_length = 2;
  c.horizon = 2;
  c.num_classes = 8;
  c.split = {0.75, beamkd::data::Granularity::kSequence, 3};
  c.train.batch_size = 8;
  c.train.max_epochs = 3;
  c.train.patience = 3;
  c.train.cycle_epochs = 2;
  c.train.seed = 5;
  c.validate();
  return c;
}

}  // namespace tiny
