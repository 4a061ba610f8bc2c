#pragma once

#include <span>
#include <vector>

#include "beamkd/nn/layers.hpp"

namespace beamkd::nn {

/// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(std::vector<Parameter*> params, Options options);
  void step(double lr);
  void zero_grad();
  long steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  Options options_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

/// Global L2 norm of the gradients.
double grad_norm(std::span<Parameter* const> params);

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace beamkd::nn
