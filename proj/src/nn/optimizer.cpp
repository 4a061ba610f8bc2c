#include "beamkd/nn/optimizer.hpp"

#include <cmath>

namespace beamkd::nn {

AdamW::AdamW(std::vector<Parameter*> params, Options options) : params_(std::move(params)), options_(options) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void AdamW::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  const double decay = 1.0 - lr * options_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      p.value[i] *= decay;
      p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
}

double grad_norm(std::span<Parameter* const> params) {
  double total = 0.0;
  for (const auto* p : params)
    for (double g : p->grad) total += g * g;
  return std::sqrt(total);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (auto* p : params)
      for (double& g : p->grad) g *= scale;
  }
  return norm;
}

}  // namespace beamkd::nn
