#include "mmdforge/optim.hpp"

#include <cmath>
#include <string>

#include "mmdforge/errors.hpp"

namespace mmdforge {

void rmsprop_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
                  RmsPropState& state, double learning_rate, double sign) {
  if (params.size() != grads.size()) {
    throw DimensionError("rmsprop_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
  }
  if (sign != 1.0 && sign != -1.0) throw ContractError("rmsprop_step: sign must be +1 or -1");
  if (state.mean_square.empty()) {
    state.mean_square.reserve(params.size());
    for (const auto& p : params) state.mean_square.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  if (state.mean_square.size() != params.size()) {
    throw ContractError("rmsprop_step: state was initialised for a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    Matrix& p = params[i];
    Matrix& s = state.mean_square[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw DimensionError("rmsprop_step: gradient shape mismatch at slot " + std::to_string(i));
    }
    if (!g.allFinite()) throw NumericError("rmsprop_step: non-finite gradient at slot " +
                                           std::to_string(i));
    s = state.rho * s + (1.0 - state.rho) * g.cwiseProduct(g);
    p += (sign * learning_rate) *
         g.cwiseQuotient((s.cwiseSqrt().array() + state.epsilon).matrix());
    if (!p.allFinite()) throw NumericError("rmsprop_step: non-finite parameter at slot " +
                                           std::to_string(i));
  }
}

void clip_params(std::vector<Matrix>& params, double clip) {
  if (!(clip > 0.0)) throw ContractError("clip_params: clip must be positive");
  for (auto& p : params) p = p.cwiseMax(-clip).cwiseMin(clip);
}

}  // namespace mmdforge
