#pragma once

#include <vector>

#include "mmdforge/tensor.hpp"

namespace mmdforge {

// RMSProp accumulator, one slot per parameter matrix. Slots are created
// lazily on the first step so the state can outlive tape rebuilds.
struct RmsPropState {
  double rho = 0.9;
  double epsilon = 1e-8;
  std::vector<Matrix> mean_square;
};

// In-place RMSProp update: s <- rho*s + (1-rho)*g^2, p <- p + sign*lr*g/(sqrt(s)+eps).
// sign = -1 descends, +1 ascends. Shapes of params and grads must match.
void rmsprop_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
                  RmsPropState& state, double learning_rate, double sign);

// Clamp every parameter entry to [-clip, clip]. clip must be positive.
void clip_params(std::vector<Matrix>& params, double clip);

}  // namespace mmdforge
