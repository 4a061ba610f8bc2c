#include "beamkd/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "beamkd/checkpoint.hpp"
#include "beamkd/errors.hpp"
#include "beamkd/experiment.hpp"
#include "beamkd/image.hpp"
#include "beamkd/metrics.hpp"
#include "beamkd/report.hpp"
#include "beamkd/training.hpp"
#include "json.hpp"

namespace beamkd::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

exp::ExperimentConfig resolve_config(const std::string& spec) {
  if (fs::exists(spec)) return exp::load_experiment(spec);
  for (const auto& name : exp::preset_names())
    if (name == spec) return exp::preset(spec);
  throw UsageError("config '" + spec + "' is neither a file nor a preset");
}

fs::path resolve_data(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv("BEAMKD_DATA_ROOT"); root != nullptr && *root != '\0') return root;
  throw UsageError("--data not given and BEAMKD_DATA_ROOT is unset");
}

void write_json(const fs::path& p, const ordered_json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

/// Every run directory gets the resolved config and a manifest of the run.
void write_run_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                        const std::string& config_spec, const ordered_json& config, const ordered_json& inputs,
                        std::uint64_t seed, const std::vector<fs::path>& artifacts) {
  ordered_json m;
  m["command"] = command;
  m["args"] = args;
  m["config_path"] = config_spec;
  m["config"] = config;
  m["inputs"] = inputs;
  m["output"] = dir.generic_string();
  m["seed"] = seed;
  ordered_json digests = ordered_json::object();
  for (const auto& a : artifacts) digests[fs::relative(a, dir).generic_string()] = ckpt::file_digest(a);
  m["artifact_digests"] = digests;
  write_json(dir / "run_manifest.json", m);
}

struct LoadedData {
  std::vector<data::FrameRecord> records;
  std::vector<data::Sample> samples;
  data::MaskBank bank;
};

void check_labels(const std::vector<data::Sample>& samples, int classes) {
  for (const auto& s : samples)
    for (int y : s.labels)
      if (y < 0 || y >= classes)
        throw UsageError("label " + std::to_string(y) + " in " + s.sequence_id + " outside [0, " +
                         std::to_string(classes) + ")");
}

ordered_json sample_key(const data::Sample& s) {
  return ordered_json{{"sequence_id", s.sequence_id}, {"anchor", s.anchor}};
}

LoadedData load_data(const fs::path& data_dir, const std::optional<fs::path>& cache, const exp::ExperimentConfig& cfg) {
  LoadedData d;
  const fs::path manifest = fs::is_directory(data_dir) ? data_dir / "manifest.jsonl" : data_dir;
  d.records = data::read_manifest(manifest);
  d.samples = data::window_sequences(d.records, cfg.input_length, cfg.horizon);
  if (d.samples.empty()) throw UsageError("no complete windows in " + manifest.string());
  check_labels(d.samples, cfg.num_classes);

  if (cache) {
    std::ifstream in(*cache / "index.json");
    if (!in) throw IoError("cannot open mask cache index in " + cache->string());
    const auto index = nlohmann::json::parse(in);
    if (index.at("input_length").get<int>() != cfg.input_length ||
        index.at("epsilon").get<double>() != cfg.preprocess.epsilon ||
        index.at("height").get<int>() != cfg.preprocess.out_height ||
        index.at("width").get<int>() != cfg.preprocess.out_width)
      throw UsageError("mask cache " + cache->string() + " was built with different preprocessing settings");
    const auto& entries = index.at("samples");
    if (entries.size() != d.samples.size()) throw UsageError("mask cache does not match the dataset windows");
    std::vector<preprocess::MotionMaskSequence> seqs;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.at("sequence_id").get<std::string>() != d.samples[i].sequence_id ||
          e.at("anchor").get<int>() != d.samples[i].anchor)
        throw UsageError("mask cache entry " + std::to_string(i) + " does not match the dataset windows");
      seqs.push_back(preprocess::read_mask_file(*cache / e.at("file").get<std::string>()).sequence);
    }
    d.bank = data::MaskBank::from_sequences(seqs);
  } else {
    const auto& recs = d.records;
    d.bank = data::MaskBank::from_frames(
        d.samples, cfg.input_length, [&](std::size_t r) { return read_image(recs[r].image_path); }, cfg.preprocess);
  }
  return d;
}

// ------------------------------------------------------------ subcommands

int cmd_gen_synthetic(const std::string& config_spec, const fs::path& out_dir, const std::vector<std::string>& args,
                      std::ostream& out) {
  const auto cfg = resolve_config(config_spec);
  const auto records = scene::generate_dataset(cfg.scene);
  const auto manifest = scene::write_dataset(records, out_dir);
  write_json(out_dir / "config.json", exp::to_json(cfg));
  write_run_manifest(out_dir, "gen-synthetic", args, config_spec, exp::to_json(cfg), ordered_json::object(),
                     cfg.scene.rng_seed, {manifest, out_dir / "config.json"});
  out << "wrote " << records.size() << " sequences to " << out_dir.string() << "\n";
  return 0;
}

int cmd_ingest(const fs::path& manifest, const fs::path& out_dir, const std::vector<std::string>& args,
               std::ostream& out) {
  auto records = data::read_manifest(manifest);
  for (auto& r : records) {
    r.image_path = fs::absolute(r.image_path).lexically_normal();
    if (!fs::exists(r.image_path)) throw IoError("missing image " + r.image_path.string());
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.sequence_id != b.sequence_id ? a.sequence_id < b.sequence_id : a.frame_index < b.frame_index;
  });
  fs::create_directories(out_dir);
  data::write_manifest(out_dir / "manifest.jsonl", records);
  write_run_manifest(out_dir, "ingest", args, "", ordered_json::object(),
                     {{"manifest", fs::absolute(manifest).generic_string()}}, 0, {out_dir / "manifest.jsonl"});
  out << "ingested " << records.size() << " frames into " << out_dir.string() << "\n";
  return 0;
}

int cmd_preprocess(const std::string& config_spec, const fs::path& data_dir, const fs::path& out_dir,
                   const std::vector<std::string>& args, std::ostream& out) {
  const auto cfg = resolve_config(config_spec);
  const auto d = load_data(data_dir, std::nullopt, cfg);
  fs::create_directories(out_dir / "masks");
  ordered_json index;
  index["input_length"] = cfg.input_length;
  index["horizon"] = cfg.horizon;
  index["height"] = cfg.preprocess.out_height;
  index["width"] = cfg.preprocess.out_width;
  index["epsilon"] = cfg.preprocess.epsilon;
  ordered_json entries = ordered_json::array();
  std::vector<fs::path> artifacts;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof name, "masks/sample_%06zu.bkm", i);
    preprocess::write_mask_file(out_dir / name, d.bank.sequence(i), cfg.preprocess.epsilon);
    auto e = sample_key(d.samples[i]);
    e["file"] = name;
    entries.push_back(e);
  }
  index["samples"] = entries;
  write_json(out_dir / "index.json", index);
  write_run_manifest(out_dir, "preprocess", args, config_spec, exp::to_json(cfg),
                     {{"data", fs::absolute(data_dir).generic_string()}}, 0, {out_dir / "index.json"});
  out << "cached " << d.samples.size() << " windows in " << out_dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config = "desk-synthetic";
  std::string data;
  std::string cache;
  std::string role = "teacher";
  std::string stage = "vanilla";
  std::string teacher_checkpoint;
  std::string granularity;
  std::optional<int> max_epochs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto role = model::parse_role(a.role);
  const auto stage = train::parse_stage(a.stage);
  if (stage != train::Stage::kVanilla && a.teacher_checkpoint.empty())
    throw UsageError("--stage " + a.stage + " requires --teacher-checkpoint");
  if (stage == train::Stage::kSelfKd && role != model::Role::kTeacher)
    throw UsageError("--stage self-kd trains a teacher (--role teacher)");
  if (stage == train::Stage::kVanilla && !a.teacher_checkpoint.empty())
    throw UsageError("--teacher-checkpoint is only used by the self-kd and kd stages");

  auto cfg = resolve_config(a.config);
  if (!a.granularity.empty()) cfg.split.granularity = data::parse_granularity(a.granularity);
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.split.seed = *a.seed;
  }
  if (a.max_epochs) {
    if (*a.max_epochs < 0) throw UsageError("--max-epochs must be >= 0");
    cfg.train.max_epochs = *a.max_epochs;
    if (cfg.train.max_epochs > 0) cfg.train.patience = std::min(cfg.train.patience, cfg.train.max_epochs);
  }
  cfg.validate();

  std::unique_ptr<model::BeamTracker> teacher;
  if (!a.teacher_checkpoint.empty()) {
    const auto tb = ckpt::load_checkpoint(a.teacher_checkpoint, cfg.teacher_model());
    teacher = ckpt::instantiate(tb);
  }

  const fs::path data_dir = resolve_data(a.data);
  const auto d = load_data(data_dir, a.cache.empty() ? std::nullopt : std::optional<fs::path>(a.cache), cfg);
  const auto split = data::split_dataset(d.samples, cfg.split);
  train::DataView tv{d.samples, &d.bank, split.train};
  train::DataView vv{d.samples, &d.bank, split.validation};

  const auto mc = role == model::Role::kTeacher ? cfg.teacher_model() : cfg.student_model();
  const auto tcfg = cfg.stage_train(stage);
  model::BeamTracker model(mc, train::stage_seed(tcfg.seed, stage));

  const fs::path run = a.out;
  fs::create_directories(run);
  ordered_json run_config = exp::to_json(cfg);
  run_config["role"] = a.role;
  run_config["stage"] = a.stage;
  write_json(run / "config.json", run_config);

  train::FitOptions opts;
  opts.run_config = run_config;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    out << "epoch " << r.epoch << "  lr " << r.lr << "  train " << r.train_loss << "  val " << r.val_loss << "\n";
  };
  out << role_name(role) << " " << model::count_parameters(model) << " parameters, " << split.train.size()
      << " train / " << split.validation.size() << " validation windows\n";
  const auto res = train::fit(model, tv, vv, tcfg, teacher.get(), opts);

  const fs::path ckpt_path = run / "checkpoint.bkd";
  ckpt::save_checkpoint(res.best, ckpt_path);
  train::write_run_log(res.history, run / "train_log.jsonl");
  train::write_timing_log(res.history, run / "timing.jsonl");
  ordered_json inputs{{"data", fs::absolute(data_dir).generic_string()}};
  if (!a.cache.empty()) inputs["cache"] = fs::absolute(a.cache).generic_string();
  if (!a.teacher_checkpoint.empty()) {
    inputs["teacher_checkpoint"] = fs::absolute(a.teacher_checkpoint).generic_string();
    inputs["teacher_digest"] = ckpt::file_digest(a.teacher_checkpoint);
  }
  write_run_manifest(run, "train", args, a.config, run_config, inputs, tcfg.seed,
                     {ckpt_path, run / "train_log.jsonl", run / "config.json"});
  out << "best epoch " << res.best_epoch << " val " << res.best.best_val_loss << " -> " << ckpt_path.string()
      << " (" << ckpt::file_digest(ckpt_path) << ")\n";
  return 0;
}

int cmd_evaluate(const fs::path& checkpoint, const std::string& data_flag, const std::string& cache,
                 const std::string& which, std::optional<double> delta, std::string out_file,
                 const std::vector<std::string>& args, std::ostream& out) {
  const auto bundle = ckpt::load_checkpoint(checkpoint);
  if (bundle.run_config.empty()) throw UsageError(checkpoint.string() + " carries no run config");
  auto cfg = exp::experiment_from_json(nlohmann::json(bundle.run_config));
  auto model = ckpt::instantiate(bundle);

  const fs::path data_dir = resolve_data(data_flag);
  const auto d = load_data(data_dir, cache.empty() ? std::nullopt : std::optional<fs::path>(cache), cfg);
  const auto split = data::split_dataset(d.samples, cfg.split);
  std::vector<std::size_t> ids;
  if (which == "validation") ids = split.validation;
  else if (which == "train") ids = split.train;
  else if (which == "all") {
    ids.resize(d.samples.size());
    std::iota(ids.begin(), ids.end(), 0);
  } else {
    throw UsageError("--split must be validation, train or all");
  }
  train::DataView view{d.samples, &d.bank, ids};
  const auto logits = train::predict(*model, view, cfg.train.batch_size);
  const auto labels = data::gather_labels(d.samples, ids);
  const auto rep = metrics::slot_report(logits, labels, bundle.config.slots(), delta.value_or(cfg.delta));

  if (out_file.empty()) out_file = (checkpoint.parent_path() / "eval.json").string();
  auto j = metrics::to_json(rep);
  ordered_json doc;
  doc["checkpoint_digest"] = ckpt::file_digest(checkpoint);
  doc["split"] = which;
  for (auto it = j.begin(); it != j.end(); ++it) doc[it.key()] = it.value();
  write_json(out_file, doc);
  (void)args;
  out << "ATop-1 " << rep.atop1 << "  ATop-3 " << rep.atop3 << "  ATop-5 " << rep.atop5 << "  ADBA " << rep.adba
      << "  (" << rep.n_samples << " windows) -> " << out_file << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const fs::path& out_dir, std::ostream& out) {
  std::vector<report::RunSummary> summaries;
  for (const auto& r : runs) summaries.push_back(report::load_run(r));
  for (const auto& f : report::write_report(summaries, out_dir)) out << "wrote " << f.string() << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision-aided beam tracking with knowledge distillation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config = "desk-synthetic", out_dir, manifest, data_dir, cache;
  auto* gen = app.add_subcommand("gen-synthetic", "render a synthetic dataset");
  gen->add_option("--config", config, "config file or preset");
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* ingest = app.add_subcommand("ingest", "normalise an external manifest");
  ingest->add_option("--manifest", manifest, "JSONL manifest")->required();
  ingest->add_option("--out", out_dir, "output dataset directory")->required();

  auto* prep = app.add_subcommand("preprocess", "build a motion-mask cache");
  prep->add_option("--config", config, "config file or preset");
  prep->add_option("--data", data_dir, "dataset directory");
  prep->add_option("--out", out_dir, "cache directory")->required();

  TrainArgs ta;
  std::optional<int> max_epochs;
  std::optional<std::uint64_t> seed;
  auto* tr = app.add_subcommand("train", "train a teacher or student");
  tr->add_option("--config", ta.config, "config file or preset");
  tr->add_option("--data", ta.data, "dataset directory");
  tr->add_option("--cache", ta.cache, "mask cache directory");
  tr->add_option("--role", ta.role, "teacher or student")->check(CLI::IsMember({"teacher", "student"}));
  tr->add_option("--stage", ta.stage, "vanilla, self-kd or kd")->check(CLI::IsMember({"vanilla", "self-kd", "kd"}));
  tr->add_option("--teacher-checkpoint", ta.teacher_checkpoint, "guiding teacher");
  tr->add_option("--granularity", ta.granularity, "split granularity")->check(CLI::IsMember({"sequence", "sample"}));
  tr->add_option("--max-epochs", max_epochs, "override the epoch budget");
  tr->add_option("--seed", seed, "override training and split seeds");
  tr->add_option("--out", ta.out, "run directory")->required();

  std::string checkpoint, which = "validation", eval_out;
  std::optional<double> delta;
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory");
  ev->add_option("--cache", cache, "mask cache directory");
  ev->add_option("--split", which, "validation, train or all");
  ev->add_option("--delta", delta, "DBA distance scale");
  ev->add_option("--out", eval_out, "report path (default: next to the checkpoint)");

  std::vector<std::string> runs;
  auto* rep = app.add_subcommand("report", "tables and plots over run directories");
  rep->add_option("--runs", runs, "run directories")->required();
  rep->add_option("--out", out_dir, "output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "beamkd: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) return cmd_gen_synthetic(config, out_dir, args, out);
    if (*ingest) return cmd_ingest(manifest, out_dir, args, out);
    if (*prep) return cmd_preprocess(config, resolve_data(data_dir), out_dir, args, out);
    if (*tr) {
      ta.max_epochs = max_epochs;
      ta.seed = seed;
      return cmd_train(ta, args, out);
    }
    if (*ev) return cmd_evaluate(checkpoint, data_dir, cache, which, delta, eval_out, args, out);
    if (*rep) return cmd_report(runs, out_dir, out);
  } catch (const UsageError& e) {
    err << "beamkd: usage error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "beamkd: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "beamkd: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace beamkd::cli
