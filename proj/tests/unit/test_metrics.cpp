#include <algorithm>
#include <random>
#include <set>

#include "beamkd/errors.hpp"
#include "beamkd/metrics.hpp"
#include "doctest.h"

using namespace beamkd;
using namespace beamkd::metrics;

namespace {

using Lists = std::vector<std::vector<int>>;

// Membership scan over the first k entries.
double brute_topk(const Lists& ranked, const std::vector<int>& labels, int k) {
  int hits = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    std::set<int> head(ranked[m].begin(), ranked[m].begin() + k);
    hits += head.count(labels[m]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double brute_dba(const Lists& top3, const std::vector<int>& labels, double delta) {
  double total = 0;
  for (int k = 1; k <= 3; ++k) {
    double penalty = 0;
    for (std::size_t m = 0; m < labels.size(); ++m) {
      double best = 1.0;
      for (int i = 0; i < k; ++i)
        best = std::min(best, std::min(std::abs(top3[m][static_cast<std::size_t>(i)] - labels[m]) / delta, 1.0));
      penalty += best;
    }
    total += 1.0 - penalty / static_cast<double>(labels.size());
  }
  return total / 3.0;
}

}  // namespace

TEST_CASE("ranking is descending with index tie-break") {
  CHECK(rank_classes(std::vector<double>{0.1, 0.5, 0.5, 0.2}, 3) == std::vector<int>{1, 2, 3});
  CHECK(rank_classes(std::vector<double>{1, 1, 1}, 2) == std::vector<int>{0, 1});
}

TEST_CASE("top-k examples") {
  const Lists r{{1, 2, 3, 4, 5}, {0, 2, 3, 4, 5}, {6, 7, 8, 9, 10}, {1, 9, 3, 4, 5}};
  CHECK(topk_accuracy(r, std::vector<int>{1, 0, 6, 1}, 1, 16) == 1.0);
  CHECK(topk_accuracy(r, std::vector<int>{15, 15, 15, 15}, 5, 16) == 0.0);
  CHECK(topk_accuracy(r, std::vector<int>{5, 4, 11, 9}, 5, 16) == 0.75);
  CHECK_THROWS_AS(topk_accuracy(r, std::vector<int>{1, 1, 1, 1}, 17, 16), UsageError);
  CHECK_THROWS_AS(topk_accuracy(Lists{}, std::vector<int>{}, 1, 16), UsageError);
}

TEST_CASE("dba examples") {
  CHECK(dba_score(Lists{{12, 10, 30}}, std::vector<int>{10}, 5.0) == doctest::Approx(0.8667).epsilon(1e-4));
  CHECK(dba_score(Lists{{3, 1, 2}, {7, 0, 1}}, std::vector<int>{3, 7}, 5.0) == 1.0);
  CHECK(dba_score(Lists{{20, 30, 40}}, std::vector<int>{5}, 5.0) == 0.0);
  CHECK_THROWS_AS(dba_score(Lists{{1, 2, 3}}, std::vector<int>{1}, 0.0), DomainError);
}

TEST_CASE("metrics agree with brute force and obey ordering properties") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 5 + static_cast<int>(rng() % 60), M = 1 + static_cast<int>(rng() % 40);
    Lists ranked;
    std::vector<int> labels;
    for (int m = 0; m < M; ++m) {
      std::vector<double> scores(static_cast<std::size_t>(C));
      for (auto& s : scores) s = static_cast<double>(rng() % 7);  // plenty of ties
      ranked.push_back(rank_classes(scores, 5));
      labels.push_back(static_cast<int>(rng() % static_cast<unsigned>(C)));
    }
    double prev = 0;
    for (int k : {1, 3, 5}) {
      const double acc = topk_accuracy(ranked, labels, k, C);
      CHECK(acc == brute_topk(ranked, labels, k));
      CHECK(acc >= prev);
      prev = acc;
    }
    Lists top3;
    for (const auto& r : ranked) top3.emplace_back(r.begin(), r.begin() + 3);
    const double dba = dba_score(top3, labels, 5.0);
    CHECK(dba == doctest::Approx(brute_dba(top3, labels, 5.0)).epsilon(1e-15));
    CHECK(dba >= topk_accuracy(ranked, labels, 1, C));
    CHECK(dba_score(top3, labels, 2.0) <= dba);
  }
}

TEST_CASE("slot report") {
  // two samples, two slots, four classes; rows are sample*slots + slot
  nn::Matrix s(4, 4);
  s(0, 1) = 1;  // sample 0 slot 0 -> 1 (label 1)
  s(1, 2) = 1;  // sample 0 slot 1 -> 2 (label 3)
  s(2, 0) = 1;  // sample 1 slot 0 -> 0 (label 0)
  s(3, 3) = 1;  // sample 1 slot 1 -> 3 (label 3)
  const std::vector<int> labels{1, 3, 0, 3};
  auto r = slot_report(s, labels, 2, 5.0);
  REQUIRE(r.per_slot.size() == 2);
  CHECK(r.n_samples == 2);
  CHECK(r.per_slot[0].top1 == 1.0);
  CHECK(r.per_slot[1].top1 == 0.5);
  CHECK(r.per_slot[1].top5 == 1.0);
  CHECK(r.atop1 == doctest::Approx(0.75));
  CHECK(r.adba == doctest::Approx((r.per_slot[0].dba + r.per_slot[1].dba) / 2));

  EvalReport manual;
  manual.per_slot = {{1, 1, 1, 1.0}, {0.5, 1, 1, 0.8}};
  finalize_averages(manual);
  CHECK(manual.adba == doctest::Approx(0.9));

  const auto back = report_from_json(nlohmann::json(to_json(r)));
  CHECK(back.atop1 == r.atop1);
  CHECK(back.per_slot.size() == 2);
  CHECK(back.per_slot[1].dba == r.per_slot[1].dba);

  nn::Matrix perfect(3, 8);
  for (std::size_t i = 0; i < 3; ++i) perfect(i, i + 2) = 5;
  auto single = slot_report(perfect, std::vector<int>{2, 3, 4}, 1, 5.0);
  CHECK(single.atop1 == 1.0);
  CHECK(single.adba == 1.0);
  CHECK(single.atop3 == single.per_slot[0].top3);
  CHECK_THROWS_AS(slot_report(nn::Matrix(0, 8), std::vector<int>{}, 1, 5.0), UsageError);
}
