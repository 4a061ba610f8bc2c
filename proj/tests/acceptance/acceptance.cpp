// Acceptance checks.  Prints one PASS / FAIL / SKIP line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance [--only 1,2,5]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/gradcheck.hpp"
#include "CLI11.hpp"
#include "beamkd/beam_oracle.hpp"
#include "beamkd/checkpoint.hpp"
#include "beamkd/dataset.hpp"
#include "beamkd/experiment.hpp"
#include "beamkd/image.hpp"
#include "beamkd/losses.hpp"
#include "beamkd/metrics.hpp"
#include "beamkd/models.hpp"
#include "beamkd/preprocess.hpp"
#include "beamkd/training.hpp"

namespace fs = std::filesystem;
using namespace beamkd;
using nn::Matrix;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::kPass : Status::kFail, detail}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects failed sub-checks so a criterion can report what went wrong.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures.empty()) return {Status::kPass, summary};
    std::string d = std::to_string(failures.size()) + " failed check(s): " + failures.front();
    if (failures.size() > 1) d += "; " + failures[1];
    return {Status::kFail, d};
  }
};

// ------------------------------------------------------------------ 1

double cross_entropy_direct(const std::vector<double>& z, int label) {
  double s = 0;
  for (double v : z) s += std::exp(v);
  return std::log(s) - z[static_cast<std::size_t>(label)];
}

double kl_direct(std::span<const double> zt, std::span<const double> zs, double T) {
  double st = 0, ss = 0;
  for (std::size_t i = 0; i < zt.size(); ++i) {
    st += std::exp(zt[i] / T);
    ss += std::exp(zs[i] / T);
  }
  double kl = 0;
  for (std::size_t i = 0; i < zt.size(); ++i) {
    const double pt = std::exp(zt[i] / T) / st, ps = std::exp(zs[i] / T) / ss;
    kl += pt * std::log(pt / ps);
  }
  return kl;
}

Outcome losses_exact() {
  Checks c;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> normal(0.0, 2.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> z(2 + rng() % 63);
    for (auto& v : z) v = normal(rng);
    const int label = static_cast<int>(rng() % z.size());
    worst = std::max(worst, std::abs(loss::focal_loss(z, label, {1.0, 0.0}) - cross_entropy_direct(z, label)));
  }
  c.expect(worst <= 1e-9, "focal(gamma=0) vs cross-entropy differs by " + fmt("%.3g", worst));

  Matrix a(7, 16), b(7, 16);
  for (auto& v : a.data) v = normal(rng);
  for (auto& v : b.data) v = normal(rng);
  for (double T : {1.0, 2.0, 5.0}) {
    c.expect(loss::distill_loss(a, a, T) == 0.0, "distill_loss on identical logits is not 0");
    double expected = 0;
    for (std::size_t r = 0; r < a.rows; ++r) expected += kl_direct(a.row(r), b.row(r), T);
    expected *= T * T;
    const double got = loss::distill_loss(a, b, T);
    c.expect(std::abs(got - expected) <= 1e-9 * std::max(1.0, expected),
             "temperature-squared scaling off at T=" + fmt("%g", T));
  }
  for (int i = 0; i < 100; ++i) {
    const double task = std::abs(normal(rng)), distill = std::abs(normal(rng));
    c.expect(loss::overall_loss(task, distill, 0.0) == task, "beta=0 endpoint not exact");
    c.expect(loss::overall_loss(task, distill, 1.0) == distill, "beta=1 endpoint not exact");
  }
  return c.outcome("1000 CE pairs, max |diff| " + fmt("%.2g", worst) + "; T in {1,2,5}; beta endpoints exact");
}

// ------------------------------------------------------------------ 2

model::ModelConfig grad_config(model::Role role) {
  auto c = role == model::Role::kTeacher ? model::ModelConfig::teacher(16, 16, 3, 2, 8)
                                         : model::ModelConfig::student(16, 16, 3, 2, 8);
  c.feature_dim = c.hidden_dim = 16;
  c.head_hidden = 12;
  c.cnn = role == model::Role::kTeacher
              ? std::vector<model::ConvSpec>{{4, 3, 2}, {4, 3, 2}, {6, 3, 2}, {6, 3, 2}, {6, 3, 2}}
              : std::vector<model::ConvSpec>{{4, 3, 2}, {4, 3, 2}, {6, 3, 2}};
  c.pool_height = c.pool_width = 2;
  return c;
}

Outcome gradients() {
  Checks c;
  std::mt19937_64 rng(202);
  double worst = 0;
  std::size_t checked = 0;

  // w.r.t. student logits
  const std::vector<int> labels{0, 3, 7, 1, 1, 2, 5, 6, 4};
  Matrix s(9, 8), t(9, 8);
  s.data = gradcheck::random_weights(72, rng);
  t.data = gradcheck::random_weights(72, rng);
  for (auto& v : t.data) v *= 3;
  for (double beta : {0.0, 0.3, 1.0})
    for (double T : {1.0, 4.0}) {
      const loss::KdConfig kd{beta, T};
      const auto bl = loss::batch_loss(s, labels, &t, {}, kd, true);
      const double e = gradcheck::worst_error(s.data, bl.grad.data,
                                              [&] { return loss::batch_loss(s, labels, &t, {}, kd, false).total; },
                                              s.data.size(), rng);
      worst = std::max(worst, e);
      checked += s.data.size();
    }

  // w.r.t. weights of every layer in both architectures
  std::set<std::string> layer_kinds;
  for (auto role : {model::Role::kTeacher, model::Role::kStudent}) {
    model::BeamTracker m(grad_config(role), 17);
    preprocess::MaskBatch masks{3, 3, 16, 16, std::vector<double>(3 * 3 * 16 * 16)};
    for (auto& v : masks.values) v = (rng() % 3 == 0) ? 1.0 : 0.0;
    const loss::KdConfig kd{0.4, 2.0};
    auto objective = [&] { return loss::batch_loss(m.forward(masks, true).logits, labels, &t, {}, kd, false).total; };
    m.zero_grad();
    const auto out = m.forward(masks, true);
    m.backward(loss::batch_loss(out.logits, labels, &t, {}, kd, true).grad);
    for (auto* p : m.trainable_parameters()) {
      const double e = gradcheck::worst_error(p->value, p->grad, objective, 2, rng);
      if (e >= 1e-4) c.expect(false, p->name + " relative error " + fmt("%.2g", e));
      worst = std::max(worst, e);
      checked += std::min<std::size_t>(2, p->value.size());
      layer_kinds.insert(p->name.substr(0, p->name.rfind('.')));
    }
  }
  c.expect(worst < 1e-4, "worst relative error " + fmt("%.2g", worst));
  return c.outcome(std::to_string(checked) + " partials over logits and " + std::to_string(layer_kinds.size()) +
                   " layers, worst relative error " + fmt("%.2g", worst));
}

// ------------------------------------------------------------------ 3

// Exhaustive sweep written from the codebook definition.
int brute_force_beam(const std::vector<std::complex<double>>& h, int C) {
  const double pi = std::acos(-1.0);
  const auto N = static_cast<int>(h.size());
  int best = 0;
  double best_gain = -1.0;
  for (int k = 0; k < C; ++k) {
    const double w = -pi + (2.0 * k + 1.0) * pi / C;
    std::complex<double> acc = 0;
    for (int n = 0; n < N; ++n) acc += std::conj(h[static_cast<std::size_t>(n)]) * std::polar(1.0 / std::sqrt(N), w * n);
    const double g = std::norm(acc);
    if (g > best_gain) {
      best_gain = g;
      best = k;
    }
  }
  return best;
}

Outcome beam_oracle() {
  Checks c;
  const beam::ArrayGeometry geom{16, 0.5};
  const auto book = beam::build_codebook(geom, 64);
  std::mt19937_64 rng(303);
  std::normal_distribution<double> normal(0.0, 1.0);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    beam::ChannelSnapshot ch;
    ch.h.resize(16);
    for (auto& v : ch.h) v = {normal(rng), normal(rng)};
    agree += beam::optimal_beam(ch, book) == brute_force_beam(ch.h, 64) ? 1 : 0;
  }
  c.expect(agree == 1000, std::to_string(1000 - agree) + " random channels disagree");

  const double pi = std::acos(-1.0);
  int previous = -1, violations = 0, grid_agree = 0;
  for (int i = 0; i < 721; ++i) {
    const double angle = -pi / 2 + (i + 1) * pi / 722;
    beam::ChannelSnapshot ch{beam::steering_vector(angle, geom), 1.0};
    const int b = beam::optimal_beam(ch, book);
    grid_agree += b == brute_force_beam(ch.h, 64) ? 1 : 0;
    if (b < previous) ++violations;
    previous = b;
  }
  c.expect(violations == 0, std::to_string(violations) + " monotonicity violations on the angle grid");
  c.expect(grid_agree == 721, "grid disagreements with the sweep");
  return c.outcome("1000/1000 random channels agree; 721-point line-of-sight grid monotone");
}

// ------------------------------------------------------------------ 4

preprocess::MotionMask threshold_direct(const GrayImage& d, double eps) {
  preprocess::MotionMask m{d.height, d.width, std::vector<std::uint8_t>(d.values.size(), 0)};
  double mx = 0;
  for (double v : d.values) mx = std::max(mx, v);
  if (mx == 0.0) return m;
  for (std::size_t i = 0; i < d.values.size(); ++i) m.values[i] = d.values[i] >= eps * mx ? 1 : 0;
  return m;
}

GrayImage gray(int h, int w, std::vector<double> v) {
  GrayImage g(h, w);
  g.values = std::move(v);
  return g;
}

Outcome preprocessing_exact() {
  Checks c;
  using preprocess::motion_mask;
  c.expect(motion_mask(gray(2, 2, {0.05, 0.5, 1.0, 0.09}), 0.1).values == std::vector<std::uint8_t>{0, 1, 1, 0},
           "2x2 example");
  c.expect(motion_mask(gray(1, 3, {0.25, 1.0, 0.2}), 0.25).values == std::vector<std::uint8_t>{1, 1, 0},
           "entry equal to eps*max");
  c.expect(motion_mask(gray(1, 3, {0.4, 0.8, 0.1}), 0.5).values == std::vector<std::uint8_t>{1, 1, 0},
           "entry equal to eps*max (0.8)");
  c.expect(motion_mask(gray(3, 3, std::vector<double>(9, 0.0)), 0.1).values == std::vector<std::uint8_t>(9, 0),
           "all-zero difference");

  RgbImage checker(2, 2);
  const std::uint8_t vals[4] = {0, 255, 255, 0};
  for (int i = 0; i < 4; ++i) std::fill_n(checker.pixels.begin() + 3 * i, 3, vals[i]);
  c.expect(std::abs(preprocess::grayscale_resize(checker, {1, 1, 0.1}).values.at(0) - 0.5) < 1e-12,
           "2x2 checkerboard resized to 1x1");

  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t pixels = 0;
  for (int i = 0; i < 1000; ++i) {
    const int h = 1 + static_cast<int>(rng() % 12), w = 1 + static_cast<int>(rng() % 12);
    const double eps = u(rng);
    GrayImage d(h, w);
    for (auto& v : d.values) v = (rng() % 4 == 0) ? 0.0 : u(rng);
    const auto m = motion_mask(d, eps);
    c.expect(m == threshold_direct(d, eps), "random difference image " + std::to_string(i));
    // full pipeline on random frames
    std::vector<RgbImage> frames(2 + rng() % 3, RgbImage(h + 3, w + 2));
    for (auto& f : frames)
      for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
    const auto seq = preprocess::preprocess_sequence(frames, {h, w, eps});
    c.expect(seq.masks.size() == frames.size() - 1, "mask count");
    for (const auto& mk : seq.masks)
      for (auto v : mk.values) {
        c.expect(v == 0 || v == 1, "non-binary mask entry");
        ++pixels;
      }
  }
  return c.outcome("crafted, boundary and zero cases exact; 1000 random inputs binary (" + std::to_string(pixels) +
                   " mask pixels)");
}

// ------------------------------------------------------------------ 5

using Lists = std::vector<std::vector<int>>;

double topk_direct(const Lists& ranked, const std::vector<int>& labels, int k) {
  std::size_t hits = 0;
  for (std::size_t m = 0; m < labels.size(); ++m)
    for (int i = 0; i < k; ++i)
      if (ranked[m][static_cast<std::size_t>(i)] == labels[m]) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double dba_direct(const Lists& top3, const std::vector<int>& labels, double delta) {
  double y[3];
  for (int k = 1; k <= 3; ++k) {
    double sum = 0;
    for (std::size_t m = 0; m < labels.size(); ++m) {
      double best = 1.0;
      for (int i = 0; i < k; ++i)
        best = std::min(best, std::min(std::abs(top3[m][static_cast<std::size_t>(i)] - labels[m]) / delta, 1.0));
      sum += best;
    }
    y[k - 1] = 1.0 - sum / static_cast<double>(labels.size());
  }
  return (y[0] + y[1] + y[2]) / 3.0;
}

// Ranking by repeated selection of the maximum, lowest index first.
std::vector<int> rank_direct(const std::vector<double>& s, int k) {
  std::vector<int> out;
  std::vector<bool> used(s.size(), false);
  for (int r = 0; r < k; ++r) {
    int best = -1;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!used[i] && (best < 0 || s[i] > s[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    used[static_cast<std::size_t>(best)] = true;
    out.push_back(best);
  }
  return out;
}

Outcome metric_oracle() {
  Checks c;
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.5, 8.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = 5 + static_cast<int>(rng() % 60), M = 1 + static_cast<int>(rng() % 50);
    Lists ranked, top3;
    std::vector<int> labels;
    for (int m = 0; m < M; ++m) {
      std::vector<double> scores(static_cast<std::size_t>(C));
      for (auto& s : scores) s = static_cast<double>(rng() % 9);
      const auto r = metrics::rank_classes(scores, 5);
      c.expect(r == rank_direct(scores, 5), "ranking differs");
      ranked.push_back(r);
      top3.emplace_back(r.begin(), r.begin() + 3);
      labels.push_back(static_cast<int>(rng() % static_cast<unsigned>(C)));
    }
    for (int k : {1, 3, 5})
      c.expect(metrics::topk_accuracy(ranked, labels, k, C) == topk_direct(ranked, labels, k),
               "top-" + std::to_string(k) + " trial " + std::to_string(trial));
    const double delta = u(rng);
    c.expect(metrics::dba_score(top3, labels, delta) == dba_direct(top3, labels, delta),
             "dba trial " + std::to_string(trial));
  }
  const double ex = metrics::dba_score(Lists{{12, 10, 30}}, std::vector<int>{10}, 5.0);
  c.expect(std::round(ex * 1e4) == 8667.0, "hand example gives " + fmt("%.6f", ex));
  return c.outcome("200 randomized instances match exactly; hand example " + fmt("%.4f", ex));
}

// ------------------------------------------------------------------ 6

Outcome windowing() {
  Checks c;
  std::mt19937_64 rng(606);
  int cases = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 9), J = static_cast<int>(rng() % 7);
    std::vector<data::FrameRecord> recs;
    std::vector<int> lengths;
    int frame = 0;
    const int segments = 1 + static_cast<int>(rng() % 3);
    for (int sgm = 0; sgm < segments; ++sgm) {
      const int F = static_cast<int>(rng() % 25);
      lengths.push_back(F);
      for (int k = 0; k < F; ++k) {
        data::FrameRecord r;
        r.sequence_id = "s" + std::to_string(trial % 3);
        r.frame_index = frame++;
        r.label = 0;
        recs.push_back(r);
      }
      frame += 1 + static_cast<int>(rng() % 3);  // gap
    }
    // enumerate anchors t with t-L >= first frame and t+J <= last frame
    std::size_t expected = 0;
    for (int F : lengths)
      for (int t = 0; t < F; ++t) expected += (t - L >= 0 && t + J <= F - 1) ? 1 : 0;
    std::size_t formula = 0;
    for (int F : lengths) formula += static_cast<std::size_t>(std::max(0, F - L - J));
    const auto samples = data::window_sequences(recs, L, J);
    c.expect(samples.size() == expected && expected == formula,
             "F,L,J trial " + std::to_string(trial) + ": got " + std::to_string(samples.size()) + ", expected " +
                 std::to_string(expected));
    for (const auto& s : samples)
      c.expect(s.frames.size() == static_cast<std::size_t>(L + 1) && s.labels.size() == static_cast<std::size_t>(J + 1),
               "window shape");
    ++cases;
  }

  // split: reproducible partition
  std::vector<data::Sample> samples;
  for (int q = 0; q < 40; ++q)
    for (int a = 0; a < 10; ++a) samples.push_back({"q" + std::to_string(q), a, {}, {}});
  for (auto g : {data::Granularity::kSequence, data::Granularity::kSample}) {
    const data::SplitSpec spec{0.75, g, 99};
    const auto s1 = data::split_dataset(samples, spec), s2 = data::split_dataset(samples, spec);
    c.expect(s1.train == s2.train && s1.validation == s2.validation, "split not reproducible");
    std::vector<std::size_t> all = s1.train;
    all.insert(all.end(), s1.validation.begin(), s1.validation.end());
    std::sort(all.begin(), all.end());
    bool partition = all.size() == samples.size();
    for (std::size_t i = 0; partition && i < all.size(); ++i) partition = all[i] == i;
    c.expect(partition, "split is not a partition");
    const auto other = data::split_dataset(samples, {0.75, g, 100});
    c.expect(other.train != s1.train, "seed has no effect on the split");
    if (g == data::Granularity::kSequence) {
      std::set<std::string> tr, va;
      for (auto i : s1.train) tr.insert(samples[i].sequence_id);
      for (auto i : s1.validation) va.insert(samples[i].sequence_id);
      for (const auto& q : tr) c.expect(!va.count(q), "sequence on both sides of the split");
    }
  }
  return c.outcome(std::to_string(cases) + " randomized (F, L, J) cases; split reproducible partition");
}

// ------------------------------------------------------------------ 7, 8

struct Desk {
  exp::ExperimentConfig cfg = exp::preset("desk-synthetic");
  std::optional<exp::SyntheticWorld> world;
  std::unique_ptr<model::BeamTracker> teacher;
  train::FitResult teacher_fit;

  const exp::SyntheticWorld& data() {
    if (!world) world = exp::build_synthetic(cfg);
    return *world;
  }
  metrics::EvalReport evaluate(model::BeamTracker& m) {
    const auto view = data().validation_view();
    return metrics::slot_report(train::predict(m, view, 64), data::gather_labels(data().samples, view.ids),
                                cfg.horizon + 1, cfg.delta);
  }
  model::BeamTracker& trained_teacher() {
    if (!teacher) {
      const auto tc = cfg.stage_train(train::Stage::kVanilla);
      teacher = std::make_unique<model::BeamTracker>(cfg.teacher_model(), train::stage_seed(tc.seed, train::Stage::kVanilla));
      train::FitOptions opt;
      opt.on_epoch = [](const train::EpochRecord& r) {
        std::cerr << "  teacher epoch " << r.epoch << " val " << r.val_loss << "\n";
      };
      teacher_fit = train::fit(*teacher, data().train_view(), data().validation_view(), tc, nullptr, opt);
    }
    return *teacher;
  }
};

Desk& desk() {
  static Desk d;
  return d;
}

Outcome synthetic_regression() {
  auto& d = desk();
  const auto& w = d.data();
  auto& teacher = d.trained_teacher();
  const auto r = d.evaluate(teacher);
  const bool ok = r.atop1 >= 0.85 && r.adba >= 0.95 && d.teacher_fit.history.size() <= 40;
  return verdict(ok, std::to_string(w.split.train.size()) + " train / " + std::to_string(w.split.validation.size()) +
                         " validation windows; ATop-1 " + fmt("%.4f", r.atop1) + " (>= 0.85), ADBA " +
                         fmt("%.4f", r.adba) + " (>= 0.95); best epoch " + std::to_string(d.teacher_fit.best_epoch) +
                         " of " + std::to_string(d.teacher_fit.history.size()));
}

Outcome kd_efficacy() {
  auto& d = desk();
  auto& teacher = d.trained_teacher();
  const auto& w = d.data();
  double with_kd = 0, without_kd = 0;
  std::string per_seed;
  for (int k = 0; k < 3; ++k) {
    const std::uint64_t seed = d.cfg.train.seed + 100 * static_cast<std::uint64_t>(k);
    double acc[2];
    for (int use_kd = 0; use_kd < 2; ++use_kd) {
      auto tc = d.cfg.stage_train(use_kd ? train::Stage::kKd : train::Stage::kVanilla);
      tc.seed = seed;
      // paired runs: identical initialization and batch order
      model::BeamTracker student(d.cfg.student_model(), train::stage_seed(seed, train::Stage::kKd));
      train::fit(student, w.train_view(), w.validation_view(), tc, use_kd ? &teacher : nullptr);
      acc[use_kd] = d.evaluate(student).atop1;
      std::cerr << "  student seed " << seed << (use_kd ? " with" : " without") << " KD: ATop-1 " << acc[use_kd]
                << "\n";
    }
    without_kd += acc[0] / 3;
    with_kd += acc[1] / 3;
    per_seed += (k ? ", " : "") + fmt("%.3f", acc[1]) + "/" + fmt("%.3f", acc[0]);
  }
  return verdict(with_kd > without_kd, "student window 2, mean ATop-1 with KD " + fmt("%.4f", with_kd) +
                                           " vs without " + fmt("%.4f", without_kd) + " (per seed " + per_seed + ")");
}

// ------------------------------------------------------------------ 9

Outcome compression() {
  model::BeamTracker t(model::ModelConfig::paper_teacher(), 1), s(model::ModelConfig::paper_student(), 1);
  const double nt = static_cast<double>(model::count_parameters(t));
  const double ns = static_cast<double>(model::count_parameters(s));
  const double ratio = ns / nt;
  const bool ok = ratio <= 0.10 && std::abs(nt - 1.8e6) <= 0.3 * 1.8e6 && std::abs(ns - 1.7e5) <= 0.3 * 1.7e5;
  return verdict(ok, "teacher " + std::to_string(static_cast<long>(nt)) + ", student " +
                         std::to_string(static_cast<long>(ns)) + ", ratio " + fmt("%.4f", ratio));
}

// ------------------------------------------------------------------ 10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BEAMKD_CLI_PATH) + " " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "beamkd_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cfg = exp::preset("desk-synthetic");
  cfg.name = "determinism";
  cfg.scene.n_sequences = 12;
  std::ofstream(dir / "config.json") << exp::to_json(cfg).dump(2);
  const std::string conf = "--config \"" + (dir / "config.json").string() + "\"";
  if (run_cli("gen-synthetic " + conf + " --out \"" + (dir / "data").string() + "\"", dir / "gen.log") != 0)
    return {Status::kFail, "gen-synthetic failed: " + slurp(dir / "gen.log")};
  for (const char* run : {"a", "b"}) {
    const std::string args = "train " + conf + " --data \"" + (dir / "data").string() + "\" --max-epochs 2 --out \"" +
                             (dir / run).string() + "\"";
    if (run_cli(args, dir / (std::string(run) + ".log")) != 0)
      return {Status::kFail, std::string("train run ") + run + " failed: " + slurp(dir / (std::string(run) + ".log"))};
  }
  const auto log_a = slurp(dir / "a" / "train_log.jsonl"), log_b = slurp(dir / "b" / "train_log.jsonl");
  const auto dig_a = ckpt::file_digest(dir / "a" / "checkpoint.bkd");
  const auto dig_b = ckpt::file_digest(dir / "b" / "checkpoint.bkd");
  const bool ok = !log_a.empty() && log_a == log_b && dig_a == dig_b;
  return verdict(ok, "run logs " + std::string(log_a == log_b ? "identical" : "differ") + ", checkpoint digests " +
                         dig_a + (dig_a == dig_b ? " == " : " != ") + dig_b);
}

// ------------------------------------------------------------------ 11

Outcome real_data() {
  const char* root = std::getenv("BEAMKD_DEEPSENSE_ROOT");
  if (root == nullptr || *root == '\0') return {Status::kSkip, "BEAMKD_DEEPSENSE_ROOT not set"};
  const fs::path manifest = fs::path(root) / "manifest.jsonl";
  if (!fs::exists(manifest)) return {Status::kSkip, "no manifest.jsonl under " + std::string(root)};

  const auto base = exp::preset("paper-teacher");
  const auto records = data::read_manifest(manifest);
  const auto samples = data::window_sequences(records, base.input_length, base.horizon);
  const auto bank = data::MaskBank::from_frames(
      samples, base.input_length, [&](std::size_t r) { return read_image(records[r].image_path); }, base.preprocess);
  const auto split = data::split_dataset(samples, base.split);
  const train::DataView tv{samples, &bank, split.train}, vv{samples, &bank, split.validation};
  const auto labels = data::gather_labels(samples, vv.ids);
  auto evaluate = [&](model::BeamTracker& m) {
    return metrics::slot_report(train::predict(m, vv, 64), labels, base.horizon + 1, base.delta);
  };

  model::BeamTracker vanilla(base.teacher_model(), train::stage_seed(base.train.seed, train::Stage::kVanilla));
  train::fit(vanilla, tv, vv, base.stage_train(train::Stage::kVanilla), nullptr);
  model::BeamTracker refined(base.teacher_model(), train::stage_seed(base.train.seed, train::Stage::kSelfKd));
  train::fit(refined, tv, vv, base.stage_train(train::Stage::kSelfKd), &vanilla);
  const auto tr = evaluate(refined);
  Checks c;
  c.expect(std::abs(tr.atop5 * 100 - 94.63) <= 3.0, "teacher ATop-5 " + fmt("%.2f", tr.atop5 * 100));
  c.expect(std::abs(tr.adba * 100 - 95.00) <= 3.0, "teacher ADBA " + fmt("%.2f", tr.adba * 100));

  std::string detail = "self-KD teacher ATop-5 " + fmt("%.2f", tr.atop5 * 100) + ", ADBA " + fmt("%.2f", tr.adba * 100);
  for (const char* name : {"paper-student-L8", "paper-student-L5", "paper-student-L3"}) {
    const auto cfg = exp::preset(name);
    metrics::EvalReport reps[2];
    for (int use_kd = 0; use_kd < 2; ++use_kd) {
      model::BeamTracker s(cfg.student_model(), train::stage_seed(cfg.train.seed, train::Stage::kKd));
      train::fit(s, tv, vv, cfg.stage_train(use_kd ? train::Stage::kKd : train::Stage::kVanilla),
                 use_kd ? &refined : nullptr);
      reps[use_kd] = evaluate(s);
    }
    const bool ordered = reps[1].atop1 > reps[0].atop1 && reps[1].atop3 > reps[0].atop3 &&
                         reps[1].atop5 > reps[0].atop5 && reps[1].adba > reps[0].adba;
    c.expect(ordered, std::string(name) + ": KD does not beat vanilla on every metric");
    detail += std::string("; ") + name + " ATop-5 " + fmt("%.2f", reps[1].atop5 * 100) + " vs " +
              fmt("%.2f", reps[0].atop5 * 100);
  }
  return c.outcome(detail);
}

// ------------------------------------------------------------------ driver

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
  double limit_seconds;  ///< 0: no limit enforced
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (comma separated)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "loss exactness", losses_exact, 5},
      {2, "gradient checks", gradients, 60},
      {3, "beam oracle equivalence", beam_oracle, 10},
      {4, "preprocessing bit-exactness", preprocessing_exact, 5},
      {5, "metric oracle", metric_oracle, 5},
      {6, "windowing arithmetic", windowing, 5},
      {7, "synthetic end-to-end regression", synthetic_regression, 30 * 60},
      {8, "distillation efficacy", kd_efficacy, 60 * 60},
      {9, "compression", compression, 0},
      {10, "determinism", determinism, 0},
      {11, "real-data reproduction", real_data, 0},
  };

  int failures = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (o.status == Status::kPass && cr.limit_seconds > 0 && secs > cr.limit_seconds)
      o = {Status::kFail, o.detail + "; exceeded the " + fmt("%.0f", cr.limit_seconds) + " s budget"};
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failures;
    std::cout << tag << "  criterion " << cr.id << " (" << cr.title << "): " << o.detail << " [" << fmt("%.1f", secs)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
