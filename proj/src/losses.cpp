#include "beamkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beamkd/errors.hpp"

namespace beamkd::loss {

namespace {

constexpr double kFloor = 1e-12;

void check_temperature(double t) {
  if (!(t > 0.0)) throw DomainError("temperature must be > 0, got " + std::to_string(t));
}

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes)
    throw UsageError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
}

}  // namespace

void FocalConfig::validate() const {
  if (!(alpha >= 0.0)) throw DomainError("focal alpha must be >= 0");
  if (!(gamma >= 0.0)) throw DomainError("focal gamma must be >= 0");
}

void KdConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1], got " + std::to_string(beta));
  check_temperature(temperature);
}

std::vector<double> log_softmax_temperature(std::span<const double> logits, double temperature) {
  check_temperature(temperature);
  if (logits.empty()) throw UsageError("softmax of an empty vector");
  const double peak = *std::max_element(logits.begin(), logits.end()) / temperature;
  double total = 0.0;
  for (double z : logits) total += std::exp(z / temperature - peak);
  const double lse = peak + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

std::vector<double> softmax_temperature(std::span<const double> logits, double temperature) {
  auto out = log_softmax_temperature(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

double focal_loss(std::span<const double> logits, int label, const FocalConfig& cfg) {
  check_label(label, logits.size());
  const auto logp = log_softmax_temperature(logits, 1.0);
  const double lp = std::max(logp[static_cast<std::size_t>(label)], std::log(kFloor));
  const double p = std::exp(lp);
  const double weight = cfg.gamma == 0.0 ? 1.0 : std::pow(1.0 - p, cfg.gamma);
  return -cfg.alpha * weight * lp;
}

std::vector<double> focal_loss_grad(std::span<const double> logits, int label, const FocalConfig& cfg) {
  check_label(label, logits.size());
  const auto logp = log_softmax_temperature(logits, 1.0);
  const auto y = static_cast<std::size_t>(label);
  const double lp = std::max(logp[y], std::log(kFloor));
  const double p = std::exp(lp);
  // dL/dp_y * dp_y/dz_i with dp_y/dz_i = p_y (delta_iy - p_i) folded in.
  double scale;
  if (cfg.gamma == 0.0) {
    scale = -cfg.alpha;
  } else {
    const double q = 1.0 - p;
    const double dq = cfg.gamma == 1.0 ? 1.0 : std::pow(q, cfg.gamma - 1.0);
    scale = -cfg.alpha * (std::pow(q, cfg.gamma) - cfg.gamma * dq * p * lp);
  }
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] = scale * ((i == y ? 1.0 : 0.0) - std::exp(logp[i]));
  return g;
}

double task_loss(const nn::Matrix& logits, std::span<const int> labels, const FocalConfig& cfg) {
  if (labels.size() != logits.rows)
    throw UsageError("task_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows) +
                     " slots");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) total += focal_loss(logits.row(r), labels[r], cfg);
  return total;
}

namespace {

void check_pair(const nn::Matrix& t, const nn::Matrix& s) {
  if (!t.same_shape(s)) throw UsageError("distill_loss: teacher and student logits differ in shape");
}

double kl_row(std::span<const double> zt, std::span<const double> zs, double temperature) {
  const auto lt = log_softmax_temperature(zt, temperature);
  const auto ls = log_softmax_temperature(zs, temperature);
  double kl = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    const double pt = std::exp(lt[i]);
    if (pt > 0.0) kl += pt * (lt[i] - std::max(ls[i], std::log(kFloor)));
  }
  return std::max(kl, 0.0);
}

}  // namespace

double distill_loss(const nn::Matrix& teacher_logits, const nn::Matrix& student_logits, double temperature) {
  check_temperature(temperature);
  check_pair(teacher_logits, student_logits);
  double total = 0.0;
  for (std::size_t r = 0; r < student_logits.rows; ++r)
    total += kl_row(teacher_logits.row(r), student_logits.row(r), temperature);
  return total * temperature * temperature;
}

nn::Matrix distill_loss_grad(const nn::Matrix& teacher_logits, const nn::Matrix& student_logits, double temperature) {
  check_temperature(temperature);
  check_pair(teacher_logits, student_logits);
  nn::Matrix g(student_logits.rows, student_logits.cols);
  for (std::size_t r = 0; r < student_logits.rows; ++r) {
    const auto pt = softmax_temperature(teacher_logits.row(r), temperature);
    const auto ps = softmax_temperature(student_logits.row(r), temperature);
    for (std::size_t c = 0; c < ps.size(); ++c) g(r, c) = temperature * (ps[c] - pt[c]);
  }
  return g;
}

double overall_loss(double task, double distill, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1], got " + std::to_string(beta));
  if (beta == 0.0) return task;
  if (beta == 1.0) return distill;
  return (1.0 - beta) * task + beta * distill;
}

BatchLoss batch_loss(const nn::Matrix& student_logits, std::span<const int> labels, const nn::Matrix* teacher_logits,
                     const FocalConfig& focal, const KdConfig& kd, bool want_grad) {
  kd.validate();
  if (labels.size() != student_logits.rows) throw UsageError("batch_loss: label count does not match logit rows");
  if (student_logits.rows == 0) throw UsageError("batch_loss: empty batch");
  const bool distilling = kd.beta > 0.0;
  if (distilling && teacher_logits == nullptr) throw UsageError("batch_loss: beta > 0 needs teacher logits");

  const double rows = static_cast<double>(student_logits.rows);
  BatchLoss out;
  if (want_grad) out.grad = nn::Matrix(student_logits.rows, student_logits.cols);
  const double task_w = (1.0 - kd.beta) / rows;
  for (std::size_t r = 0; r < student_logits.rows; ++r) {
    out.task += focal_loss(student_logits.row(r), labels[r], focal);
    if (want_grad && kd.beta < 1.0) {
      const auto g = focal_loss_grad(student_logits.row(r), labels[r], focal);
      for (std::size_t c = 0; c < g.size(); ++c) out.grad(r, c) += task_w * g[c];
    }
  }
  out.task /= rows;
  if (distilling) {
    out.distill = distill_loss(*teacher_logits, student_logits, kd.temperature) / rows;
    if (want_grad) {
      const auto g = distill_loss_grad(*teacher_logits, student_logits, kd.temperature);
      const double w = kd.beta / rows;
      for (std::size_t i = 0; i < g.data.size(); ++i) out.grad.data[i] += w * g.data[i];
    }
  }
  out.total = overall_loss(out.task, out.distill, kd.beta);
  return out;
}

}  // namespace beamkd::loss
