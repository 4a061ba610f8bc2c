#include "beamkd/experiment.hpp"

#include <fstream>

#include "beamkd/errors.hpp"

namespace beamkd::exp {

void ExperimentConfig::validate() const {
  scene.validate();
  preprocess.validate();
  if (input_length < 1) throw UsageError("input_length must be >= 1");
  if (student_length < 1 || student_length > input_length)
    throw UsageError("student_length must lie in [1, input_length]");
  if (horizon < 0) throw UsageError("horizon must be >= 0");
  if (num_classes < 1) throw UsageError("num_classes must be >= 1");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
    throw UsageError("split.train_fraction must lie in (0, 1)");
  if (!(delta > 0.0)) throw UsageError("delta must be > 0");
  train.validate();
  self_kd.validate();
  student_kd.validate();
  teacher_model().validate();
  student_model().validate();
}

model::ModelConfig ExperimentConfig::teacher_model() const {
  const int h = preprocess.out_height, w = preprocess.out_width;
  if (scale == ModelScale::kPaper) {
    auto c = model::ModelConfig::paper_teacher(input_length, horizon, num_classes);
    c.input_height = h;
    c.input_width = w;
    return c;
  }
  return model::ModelConfig::teacher(h, w, input_length, horizon, num_classes);
}

model::ModelConfig ExperimentConfig::student_model() const {
  const int h = preprocess.out_height, w = preprocess.out_width;
  if (scale == ModelScale::kPaper) {
    auto c = model::ModelConfig::paper_student(student_length, horizon, num_classes);
    c.input_height = h;
    c.input_width = w;
    return c;
  }
  return model::ModelConfig::student(h, w, student_length, horizon, num_classes);
}

train::TrainConfig ExperimentConfig::stage_train(train::Stage stage) const {
  train::TrainConfig t = train;
  switch (stage) {
    case train::Stage::kVanilla: t.kd = {0.0, 1.0}; break;
    case train::Stage::kSelfKd: t.kd = self_kd; break;
    case train::Stage::kKd: t.kd = student_kd; break;
  }
  return t;
}

namespace {

const char* scale_name(ModelScale s) { return s == ModelScale::kDesk ? "desk" : "paper"; }

ModelScale parse_scale(const std::string& s) {
  if (s == "desk") return ModelScale::kDesk;
  if (s == "paper") return ModelScale::kPaper;
  throw UsageError("model_scale must be 'desk' or 'paper', got '" + s + "'");
}

}  // namespace

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  const auto& s = c.scene;
  j["scene"] = {{"frame_height", s.frame_height},
                {"frame_width", s.frame_width},
                {"object_height", s.object_height},
                {"object_width", s.object_width},
                {"speed_min", s.speed_min},
                {"speed_max", s.speed_max},
                {"fov_min", s.fov_min},
                {"fov_max", s.fov_max},
                {"n_distractors", s.n_distractors},
                {"frames_per_sequence", s.frames_per_sequence},
                {"n_sequences", s.n_sequences},
                {"n_antennas", s.geometry.n_antennas},
                {"antenna_spacing", s.geometry.spacing},
                {"codebook_size", s.codebook_size},
                {"seed", s.rng_seed}};
  j["preprocess"] = {{"out_height", c.preprocess.out_height},
                     {"out_width", c.preprocess.out_width},
                     {"epsilon", c.preprocess.epsilon}};
  j["input_length"] = c.input_length;
  j["student_length"] = c.student_length;
  j["horizon"] = c.horizon;
  j["num_classes"] = c.num_classes;
  j["model_scale"] = scale_name(c.scale);
  j["split"] = {{"train_fraction", c.split.train_fraction},
                {"granularity", data::granularity_name(c.split.granularity)},
                {"seed", c.split.seed}};
  j["train"] = train::to_json(c.train);
  j["self_kd"] = {{"beta", c.self_kd.beta}, {"temperature", c.self_kd.temperature}};
  j["student_kd"] = {{"beta", c.student_kd.beta}, {"temperature", c.student_kd.temperature}};
  j["delta"] = c.delta;
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("scene")) {
      const auto& s = j["scene"];
      auto& o = c.scene;
      o.frame_height = s.value("frame_height", o.frame_height);
      o.frame_width = s.value("frame_width", o.frame_width);
      o.object_height = s.value("object_height", o.object_height);
      o.object_width = s.value("object_width", o.object_width);
      o.speed_min = s.value("speed_min", o.speed_min);
      o.speed_max = s.value("speed_max", o.speed_max);
      o.fov_min = s.value("fov_min", o.fov_min);
      o.fov_max = s.value("fov_max", o.fov_max);
      o.n_distractors = s.value("n_distractors", o.n_distractors);
      o.frames_per_sequence = s.value("frames_per_sequence", o.frames_per_sequence);
      o.n_sequences = s.value("n_sequences", o.n_sequences);
      o.geometry.n_antennas = s.value("n_antennas", o.geometry.n_antennas);
      o.geometry.spacing = s.value("antenna_spacing", o.geometry.spacing);
      o.codebook_size = s.value("codebook_size", o.codebook_size);
      o.rng_seed = s.value("seed", o.rng_seed);
    }
    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      c.preprocess.out_height = p.value("out_height", c.preprocess.out_height);
      c.preprocess.out_width = p.value("out_width", c.preprocess.out_width);
      c.preprocess.epsilon = p.value("epsilon", c.preprocess.epsilon);
    }
    c.input_length = j.value("input_length", c.input_length);
    c.student_length = j.value("student_length", c.input_length);
    c.horizon = j.value("horizon", c.horizon);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.scale = parse_scale(j.value("model_scale", std::string(scale_name(c.scale))));
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
      c.split.granularity = data::parse_granularity(s.value("granularity", std::string("sequence")));
      c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("train")) c.train = train::train_config_from_json(j["train"]);
    if (j.contains("self_kd")) {
      c.self_kd.beta = j["self_kd"].value("beta", c.self_kd.beta);
      c.self_kd.temperature = j["self_kd"].value("temperature", c.self_kd.temperature);
    }
    c.student_kd = train::student_kd_defaults(c.student_length);
    if (j.contains("student_kd")) {
      c.student_kd.beta = j["student_kd"].value("beta", c.student_kd.beta);
      c.student_kd.temperature = j["student_kd"].value("temperature", c.student_kd.temperature);
    }
    c.delta = j.value("delta", c.delta);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

std::vector<std::string> preset_names() {
  return {"desk-synthetic", "paper-teacher", "paper-student-L8", "paper-student-L5", "paper-student-L3"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "desk-synthetic") {
    c.scene = scene::SceneConfig{};
    c.preprocess = {64, 64, 0.1};
    c.input_length = 4;
    c.student_length = 2;
    c.horizon = 3;
    c.num_classes = c.scene.codebook_size;
    c.scale = ModelScale::kDesk;
    c.split = {5.0 / 6.0, data::Granularity::kSequence, 7};
    c.train.max_epochs = 40;
    c.train.patience = 20;
    c.train.initial_lr = 2e-3;
    c.train.min_lr = 1e-5;
    c.train.seed = 11;
    c.student_kd = train::student_kd_defaults(c.student_length);
  } else if (name == "paper-teacher" || name.rfind("paper-student-L", 0) == 0) {
    c.preprocess = {54, 96, 0.1};
    c.input_length = 8;
    c.horizon = 6;
    c.num_classes = 64;
    c.scale = ModelScale::kPaper;
    c.split = {0.8, data::Granularity::kSequence, 0};
    c.scene.frame_height = 540;
    c.scene.frame_width = 960;
    c.scene.object_height = 40;
    c.scene.object_width = 60;
    c.scene.speed_min = 8.0;
    c.scene.speed_max = 16.0;
    c.scene.geometry = {16, 0.5};
    c.scene.codebook_size = 64;
    if (name == "paper-teacher") {
      c.student_length = 8;
    } else {
      const std::string tail = name.substr(std::string("paper-student-L").size());
      if (tail != "8" && tail != "5" && tail != "3") throw UsageError("unknown preset '" + name + "'");
      c.student_length = std::stoi(tail);
    }
    c.student_kd = train::student_kd_defaults(c.student_length);
  } else {
    throw UsageError("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

SyntheticWorld build_synthetic(const ExperimentConfig& c) {
  c.validate();
  const auto sequences = scene::generate_dataset(c.scene);
  SyntheticWorld w;
  std::vector<const RgbImage*> images;
  for (const auto& seq : sequences) {
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
      data::FrameRecord r;
      r.sequence_id = scene::sequence_name(seq.sequence_id);
      r.frame_index = static_cast<int>(k);
      r.label = seq.labels[k];
      w.records.push_back(std::move(r));
      images.push_back(&seq.frames[k]);
    }
  }
  w.samples = data::window_sequences(w.records, c.input_length, c.horizon);
  w.bank = data::MaskBank::from_frames(w.samples, c.input_length, [&](std::size_t r) { return *images[r]; },
                                       c.preprocess);
  w.split = data::split_dataset(w.samples, c.split);
  return w;
}

}  // namespace beamkd::exp
