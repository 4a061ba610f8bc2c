#pragma once

#include <span>
#include <vector>

#include "beamkd/nn/linalg.hpp"

// Focal task loss, temperature-scaled KL distillation, and their mix.
// Logit matrices here are row-per-slot: [J+1 x C] for one sample, or the
// batched [B*(J+1) x C] layout produced by the models.

namespace beamkd::loss {

struct FocalConfig {
  double alpha = 1.0;
  double gamma = 2.0;
  void validate() const;
};

struct KdConfig {
  double beta = 0.0;
  double temperature = 1.0;
  void validate() const;
};

/// softmax(z / temperature)
std::vector<double> softmax_temperature(std::span<const double> logits, double temperature);

/// log softmax(z / temperature), log-sum-exp stabilised.
std::vector<double> log_softmax_temperature(std::span<const double> logits, double temperature);

/// -alpha (1-p_y)^gamma ln p_y for one slot.
double focal_loss(std::span<const double> logits, int label, const FocalConfig& cfg);

/// d focal_loss / d logits.
std::vector<double> focal_loss_grad(std::span<const double> logits, int label, const FocalConfig& cfg);

/// Sum of per-slot focal losses; one row of `logits` per slot.
double task_loss(const nn::Matrix& logits, std::span<const int> labels, const FocalConfig& cfg);

/// temperature^2 * sum over slots of KL(softmax(zT/T) || softmax(zS/T)).
double distill_loss(const nn::Matrix& teacher_logits, const nn::Matrix& student_logits, double temperature);

/// d distill_loss / d student logits.
nn::Matrix distill_loss_grad(const nn::Matrix& teacher_logits, const nn::Matrix& student_logits, double temperature);

/// (1-beta) task + beta distill.
double overall_loss(double task, double distill, double beta);

/// Batch objective: losses summed over every row, divided by the row count
/// B*(J+1).  `labels` is row-aligned with `student_logits`.  With beta = 0
/// the teacher matrix may be empty.
struct BatchLoss {
  double task = 0.0;     ///< mean focal loss per slot
  double distill = 0.0;  ///< mean distillation loss per slot
  double total = 0.0;
  nn::Matrix grad;  ///< d total / d student logits
};

BatchLoss batch_loss(const nn::Matrix& student_logits, std::span<const int> labels, const nn::Matrix* teacher_logits,
                     const FocalConfig& focal, const KdConfig& kd, bool want_grad);

}  // namespace beamkd::loss
