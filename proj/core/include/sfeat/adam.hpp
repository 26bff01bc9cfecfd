#pragma once

#include <vector>

#include "sfeat/checkpoint.hpp"

namespace sfeat {

struct AdamConfig {
  double lr = 1e-4;
  /// Coupled L2: weight_decay * w is added to the gradient before the moments.
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// One bias-corrected Adam update. Empty moment vectors are zero-initialized.
/// Throws NumericError, before touching anything, if a gradient is not finite.
void adam_step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads,
               OptimizerState& state, const AdamConfig& cfg);

void adam_step(Network& net, const std::vector<ad::Tensor>& grads, OptimizerState& state,
               const AdamConfig& cfg);

}  // namespace sfeat
