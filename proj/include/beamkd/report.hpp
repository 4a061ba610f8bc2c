#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamkd/metrics.hpp"
#include "beamkd/training.hpp"

// Markdown tables and SVG plots over finished run directories.

namespace beamkd::report {

struct RunSummary {
  std::string name;
  std::vector<train::EpochRecord> history;     ///< from train_log.jsonl, if present
  std::optional<metrics::EvalReport> eval;     ///< from eval.json, if present
};

/// Reads train_log.jsonl and eval.json from a run directory.
RunSummary load_run(const std::filesystem::path& dir);

std::string markdown(std::span<const RunSummary> runs);

/// Grouped bars of one per-slot metric ("top1", "top3", "top5", "dba").
std::string slot_bars_svg(std::span<const RunSummary> runs, const std::string& metric);

/// Train/validation loss against epoch.
std::string loss_curves_svg(std::span<const RunSummary> runs);

/// Writes report.md plus the plots under out_dir; returns written files.
std::vector<std::filesystem::path> write_report(std::span<const RunSummary> runs, const std::filesystem::path& out_dir);

}  // namespace beamkd::report
