#include "beamkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "beamkd/errors.hpp"

namespace beamkd::metrics {

std::vector<int> rank_classes(std::span<const double> scores, int k) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)] ||
           (scores[static_cast<std::size_t>(a)] == scores[static_cast<std::size_t>(b)] && a < b);
  });
  idx.resize(n);
  return idx;
}

double topk_accuracy(std::span<const std::vector<int>> ranked, std::span<const int> labels, int k, int num_classes) {
  if (k < 1) throw UsageError("top-k: k must be >= 1");
  if (k > num_classes)
    throw UsageError("top-k: k=" + std::to_string(k) + " exceeds the class count " + std::to_string(num_classes));
  if (ranked.size() != labels.size()) throw UsageError("top-k: prediction and label counts differ");
  if (labels.empty()) throw UsageError("top-k: empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (ranked[m].size() < static_cast<std::size_t>(k)) throw UsageError("top-k: prediction list shorter than k");
    const auto end = ranked[m].begin() + k;
    if (std::find(ranked[m].begin(), end, labels[m]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double dba_score(std::span<const std::vector<int>> top3, std::span<const int> labels, double delta) {
  if (!(delta > 0.0)) throw DomainError("dba: delta must be > 0");
  if (top3.size() != labels.size()) throw UsageError("dba: prediction and label counts differ");
  if (labels.empty()) throw UsageError("dba: empty evaluation set");
  double y[3] = {0, 0, 0};
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (top3[m].size() != 3) throw UsageError("dba: exactly three ranked predictions are required");
    double best = 1.0;
    for (int k = 0; k < 3; ++k) {
      best = std::min(best, std::min(std::abs(top3[m][static_cast<std::size_t>(k)] - labels[m]) / delta, 1.0));
      y[k] += best;
    }
  }
  const double n = static_cast<double>(labels.size());
  return ((1.0 - y[0] / n) + (1.0 - y[1] / n) + (1.0 - y[2] / n)) / 3.0;
}

void finalize_averages(EvalReport& r) {
  r.atop1 = r.atop3 = r.atop5 = r.adba = 0.0;
  if (r.per_slot.empty()) return;
  for (const auto& s : r.per_slot) {
    r.atop1 += s.top1;
    r.atop3 += s.top3;
    r.atop5 += s.top5;
    r.adba += s.dba;
  }
  const double n = static_cast<double>(r.per_slot.size());
  r.atop1 /= n;
  r.atop3 /= n;
  r.atop5 /= n;
  r.adba /= n;
}

EvalReport slot_report(const nn::Matrix& scores, std::span<const int> labels, int slots, double delta) {
  if (slots < 1) throw UsageError("slot_report: slots must be >= 1");
  if (scores.rows == 0) throw UsageError("slot_report: empty evaluation set");
  if (scores.rows % static_cast<std::size_t>(slots) != 0 || labels.size() != scores.rows)
    throw UsageError("slot_report: score/label shapes are inconsistent");
  const int classes = static_cast<int>(scores.cols);
  const std::size_t m = scores.rows / static_cast<std::size_t>(slots);
  const int depth = std::min(classes, 5);

  EvalReport r;
  r.n_samples = m;
  r.delta = delta;
  for (int j = 0; j < slots; ++j) {
    std::vector<std::vector<int>> ranked(m), top3(m);
    std::vector<int> y(m);
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t row = s * static_cast<std::size_t>(slots) + static_cast<std::size_t>(j);
      ranked[s] = rank_classes(scores.row(row), depth);
      top3[s].assign(ranked[s].begin(), ranked[s].begin() + std::min(depth, 3));
      while (top3[s].size() < 3) top3[s].push_back(top3[s].back());
      y[s] = labels[row];
    }
    SlotMetrics sm;
    sm.top1 = topk_accuracy(ranked, y, 1, classes);
    sm.top3 = topk_accuracy(ranked, y, std::min(3, depth), classes);
    sm.top5 = topk_accuracy(ranked, y, depth, classes);
    sm.dba = dba_score(top3, y, delta);
    r.per_slot.push_back(sm);
  }
  finalize_averages(r);
  return r;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n_samples"] = r.n_samples;
  j["delta"] = r.delta;
  j["atop1"] = r.atop1;
  j["atop3"] = r.atop3;
  j["atop5"] = r.atop5;
  j["adba"] = r.adba;
  auto slots = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.per_slot.size(); ++i) {
    const auto& s = r.per_slot[i];
    slots.push_back({{"slot", i}, {"top1", s.top1}, {"top3", s.top3}, {"top5", s.top5}, {"dba", s.dba}});
  }
  j["per_slot"] = slots;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.delta = j.at("delta").get<double>();
    for (const auto& s : j.at("per_slot"))
      r.per_slot.push_back({s.at("top1").get<double>(), s.at("top3").get<double>(), s.at("top5").get<double>(),
                            s.at("dba").get<double>()});
    finalize_averages(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("evaluation report: ") + e.what());
  }
}

}  // namespace beamkd::metrics
