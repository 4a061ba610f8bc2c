#pragma once

#include <span>
#include <vector>

#include "beamkd/nn/linalg.hpp"
#include "json.hpp"

namespace beamkd::metrics {

/// Class indices ordered by descending score; ties keep the lower index first.
std::vector<int> rank_classes(std::span<const double> scores, int k);

/// Fraction of samples whose label is among the first k ranked predictions.
double topk_accuracy(std::span<const std::vector<int>> ranked, std::span<const int> labels, int k, int num_classes);

/// Distance-based accuracy from exactly three ranked predictions per sample.
double dba_score(std::span<const std::vector<int>> top3, std::span<const int> labels, double delta);

struct SlotMetrics {
  double top1 = 0, top3 = 0, top5 = 0, dba = 0;
};

struct EvalReport {
  std::vector<SlotMetrics> per_slot;
  double atop1 = 0, atop3 = 0, atop5 = 0, adba = 0;
  std::size_t n_samples = 0;
  double delta = 5.0;
};

/// `scores` is batched [M*(J+1) x C] (row m*(J+1)+j), `labels` row-aligned.
EvalReport slot_report(const nn::Matrix& scores, std::span<const int> labels, int slots, double delta = 5.0);

/// Recomputes the averages from per_slot.
void finalize_averages(EvalReport& r);

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace beamkd::metrics
