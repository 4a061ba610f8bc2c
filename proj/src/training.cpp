#include "beamkd/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "beamkd/errors.hpp"
#include "beamkd/nn/optimizer.hpp"

namespace beamkd::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (max_epochs < 0) throw UsageError("max_epochs must be >= 0");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (max_epochs > 0 && patience > max_epochs) throw UsageError("patience must not exceed max_epochs");
  if (!(initial_lr > 0.0) || !(min_lr > 0.0) || min_lr > initial_lr)
    throw UsageError("learning rates must satisfy 0 < min_lr <= initial_lr");
  if (cycle_epochs < 1) throw UsageError("cycle_epochs must be >= 1");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw UsageError("grad_clip_norm must be > 0");
  kd.validate();
  focal.validate();
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["initial_lr"] = c.initial_lr;
  j["min_lr"] = c.min_lr;
  j["cycle_epochs"] = c.cycle_epochs;
  j["weight_decay"] = c.weight_decay;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["kd"] = {{"beta", c.kd.beta}, {"temperature", c.kd.temperature}};
  j["focal"] = {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.cycle_epochs = j.value("cycle_epochs", c.cycle_epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("kd")) {
      c.kd.beta = j["kd"].value("beta", c.kd.beta);
      c.kd.temperature = j["kd"].value("temperature", c.kd.temperature);
    }
    if (j.contains("focal")) {
      c.focal.alpha = j["focal"].value("alpha", c.focal.alpha);
      c.focal.gamma = j["focal"].value("gamma", c.focal.gamma);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
  return c;
}

std::string train_config_digest(const TrainConfig& c) { return ckpt::fnv1a_hex(to_json(c).dump()); }

double lr_at(double epoch, const TrainConfig& cfg) {
  if (epoch < 0.0) throw UsageError("lr_at: negative epoch");
  const double cycle = static_cast<double>(cfg.cycle_epochs);
  const double progress = std::fmod(epoch, cycle) / cycle;
  return cfg.min_lr + 0.5 * (cfg.initial_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

loss::KdConfig student_kd_defaults(int student_length) {
  if (student_length < 1) throw UsageError("student window length must be >= 1");
  if (student_length >= 7) return {0.3, 5.0};
  if (student_length >= 4) return {0.5, 3.0};
  return {0.5, 4.0};
}

nlohmann::ordered_json to_json(const EpochRecord& r, bool with_timing) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_task"] = r.train_task;
  j["train_distill"] = r.train_distill;
  j["val_loss"] = r.val_loss;
  j["lr"] = r.lr;
  j["max_grad_norm"] = r.max_grad_norm;
  if (with_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

namespace {

void check_view(const DataView& v, const char* what) {
  if (v.bank == nullptr) throw UsageError(std::string(what) + ": mask bank missing");
  for (auto id : v.ids)
    if (id >= v.samples.size() || id >= v.bank->num_samples())
      throw UsageError(std::string(what) + ": sample index out of range");
}

void check_compatible(const model::ModelConfig& m, const DataView& v, const char* what) {
  if (v.bank->height() != m.input_height || v.bank->width() != m.input_width)
    throw UsageError(std::string(what) + ": mask size does not match the model input");
  for (auto id : v.ids) {
    if (v.bank->window_length(id) < m.input_length)
      throw UsageError(std::string(what) + ": sample window shorter than the model input length");
    if (v.samples[id].labels.size() != static_cast<std::size_t>(m.slots()))
      throw UsageError(std::string(what) + ": sample horizon does not match the model");
  }
}

std::span<const std::size_t> slice(const std::vector<std::size_t>& ids, std::size_t from, std::size_t n) {
  return {ids.data() + from, std::min(n, ids.size() - from)};
}

void append_rows(nn::Matrix& dst, const nn::Matrix& src) {
  if (dst.rows == 0) dst.cols = src.cols;
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
  dst.rows += src.rows;
}

}  // namespace

nn::Matrix predict(model::BeamTracker& model, const DataView& view, int batch_size) {
  check_view(view, "predict");
  check_compatible(model.config(), view, "predict");
  nn::Matrix out;
  const auto B = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t i = 0; i < view.ids.size(); i += B) {
    const auto ids = slice(view.ids, i, B);
    auto res = model.forward(view.bank->gather(ids, model.config().input_length), false);
    append_rows(out, res.logits);
  }
  return out;
}

double validate(model::BeamTracker& model, const DataView& view, const TrainConfig& cfg) {
  if (view.ids.empty()) throw UsageError("validate: empty validation set");
  const nn::Matrix logits = predict(model, view, cfg.batch_size);
  const auto labels = data::gather_labels(view.samples, view.ids);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) total += loss::focal_loss(logits.row(r), labels[r], cfg.focal);
  return total / static_cast<double>(logits.rows);
}

bool EarlyStopping::update(int epoch, double val_loss) {
  if (!(val_loss < best_)) return false;
  best_ = val_loss;
  best_epoch_ = epoch;
  return true;
}

FitResult fit(model::BeamTracker& model, const DataView& train, const DataView& validation, const TrainConfig& cfg,
              model::BeamTracker* teacher, const FitOptions& options) {
  cfg.validate();
  check_view(train, "fit(train)");
  check_view(validation, "fit(validation)");
  if (train.ids.empty()) throw UsageError("fit: empty training set");
  if (validation.ids.empty()) throw UsageError("fit: empty validation set");
  const auto& mc = model.config();
  check_compatible(mc, train, "fit(train)");
  check_compatible(mc, validation, "fit(validation)");

  const bool distilling = cfg.kd.beta > 0.0;
  if (distilling && teacher == nullptr) throw UsageError("fit: beta > 0 requires a teacher model");

  FitResult result;
  const std::size_t slots = static_cast<std::size_t>(mc.slots());
  const std::size_t classes = static_cast<std::size_t>(mc.num_classes);

  // Teacher logits, one block of (J+1) rows per training id position.
  nn::Matrix teacher_logits;
  if (distilling) {
    const auto& tc = teacher->config();
    if (tc.input_length < mc.input_length)
      throw UsageError("fit: teacher window (" + std::to_string(tc.input_length) + ") shorter than the student's (" +
                       std::to_string(mc.input_length) + ")");
    if (tc.slots() != mc.slots() || tc.num_classes != mc.num_classes)
      throw UsageError("fit: teacher and student disagree on horizon or class count");
    check_compatible(tc, train, "fit(teacher)");
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t i = 0; i < train.ids.size(); i += B) {
      const auto ids = slice(train.ids, i, B);
      auto out = teacher->forward(train.bank->gather(ids, tc.input_length), false);
      ++result.teacher_forward_calls;
      append_rows(teacher_logits, out.logits);
    }
  }

  auto trainable = model.trainable_parameters();
  nn::AdamW optimizer(trainable, {0.9, 0.999, 1e-8, cfg.weight_decay});

  EarlyStopping stopper(cfg.patience);
  std::vector<ckpt::NamedArray> best_arrays;

  if (cfg.max_epochs == 0) {
    stopper.update(0, validate(model, validation, cfg));
    best_arrays = ckpt::capture(model);
  }

  int last_epoch = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch - 1, cfg);
    double rows_seen = 0.0;
    const auto batches = data::make_batches(train.ids.size(), cfg.batch_size, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& positions = batches[bi];
      std::vector<std::size_t> ids;
      ids.reserve(positions.size());
      for (auto p : positions) ids.push_back(train.ids[p]);

      nn::Matrix guide;
      if (distilling) {
        guide = nn::Matrix(positions.size() * slots, classes);
        for (std::size_t b = 0; b < positions.size(); ++b)
          for (std::size_t j = 0; j < slots; ++j) {
            const auto src = teacher_logits.row(positions[b] * slots + j);
            std::copy(src.begin(), src.end(), guide.row(b * slots + j).begin());
          }
      }

      model.zero_grad();
      auto out = model.forward(train.bank->gather(ids, mc.input_length), true);
      const auto labels = data::gather_labels(train.samples, ids);
      auto bl = loss::batch_loss(out.logits, labels, distilling ? &guide : nullptr, cfg.focal, cfg.kd, true);
      if (!std::isfinite(bl.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) +
                            " (task " + std::to_string(bl.task) + ", distill " + std::to_string(bl.distill) + ")");
      model.backward(bl.grad);
      const double pre = nn::clip_grad_norm(trainable, cfg.grad_clip_norm);
      if (!std::isfinite(pre))
        throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      const double post = nn::grad_norm(trainable);
      rec.max_grad_norm = std::max(rec.max_grad_norm, post);
      optimizer.step(rec.lr);

      const double rows = static_cast<double>(out.logits.rows);
      rec.train_loss += bl.total * rows;
      rec.train_task += bl.task * rows;
      rec.train_distill += bl.distill * rows;
      rows_seen += rows;
    }
    rec.train_loss /= rows_seen;
    rec.train_task /= rows_seen;
    rec.train_distill /= rows_seen;
    rec.val_loss = validate(model, validation, cfg);
    if (!std::isfinite(rec.val_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.max_grad_norm = std::max(result.max_grad_norm, rec.max_grad_norm);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    last_epoch = epoch;

    if (stopper.update(epoch, rec.val_loss)) best_arrays = ckpt::capture(model);
    if (stopper.should_stop(epoch)) break;
  }

  ckpt::CheckpointBundle& b = result.best;
  b.config = mc;
  b.arrays = std::move(best_arrays);
  b.epoch = stopper.best_epoch();
  b.best_val_loss = stopper.best();
  b.seed = cfg.seed;
  b.rng_state = "batches seed=" + std::to_string(cfg.seed) + " next_epoch=" + std::to_string(last_epoch + 1);
  b.train_config_digest = train_config_digest(cfg);
  b.run_config = options.run_config;
  ckpt::restore(b, model);
  result.best_epoch = stopper.best_epoch();
  return result;
}

void write_run_log(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : history) out << to_json(r, false).dump() << '\n';
}

void write_timing_log(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : history) out << nlohmann::ordered_json{{"epoch", r.epoch}, {"wall_seconds", r.wall_seconds}}.dump() << '\n';
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::kVanilla: return "vanilla";
    case Stage::kSelfKd: return "self-kd";
    case Stage::kKd: return "kd";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "vanilla") return Stage::kVanilla;
  if (s == "self-kd") return Stage::kSelfKd;
  if (s == "kd") return Stage::kKd;
  throw UsageError("stage must be vanilla, self-kd or kd; got '" + s + "'");
}

std::uint64_t stage_seed(std::uint64_t seed, Stage s) { return seed * 3 + static_cast<std::uint64_t>(s); }

PipelineResult run_pipeline(const PipelineInputs& in) {
  if (in.teacher.role != model::Role::kTeacher || in.student.role != model::Role::kStudent)
    throw UsageError("run_pipeline: expected a teacher and a student config");
  DataView train{in.samples, in.bank, in.split.train};
  DataView val{in.samples, in.bank, in.split.validation};
  PipelineResult r;

  TrainConfig cfg = in.train;
  FitOptions opts{in.run_config, {}};

  model::BeamTracker vanilla(in.teacher, stage_seed(cfg.seed, Stage::kVanilla));
  cfg.kd = {0.0, 1.0};
  r.teacher_vanilla = fit(vanilla, train, val, cfg, nullptr, opts);

  model::BeamTracker refined(in.teacher, stage_seed(cfg.seed, Stage::kSelfKd));
  cfg.kd = in.self_kd;
  r.teacher_selfkd = fit(refined, train, val, cfg, &vanilla, opts);

  model::BeamTracker student(in.student, stage_seed(cfg.seed, Stage::kKd));
  cfg.kd = in.student_kd;
  r.student = fit(student, train, val, cfg, &refined, opts);
  return r;
}

}  // namespace beamkd::train
