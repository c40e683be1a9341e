#include "cfgnn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cfgnn {

AdamState AdamState::for_params(std::span<const Tensor> params, double lr,
                                double weight_decay) {
  AdamState state;
  state.learning_rate = lr;
  state.weight_decay = weight_decay;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.shape());
    state.second_moment.emplace_back(p.shape());
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = params[p];
    const Tensor& grad = grads[p];
    Tensor& m = state.first_moment[p];
    Tensor& v = state.second_moment[p];
    if (!theta.same_shape(m) || (grad.size() != 0 && !theta.same_shape(grad))) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                  std::to_string(p));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = (grad.size() ? grad[i] : 0.0) + state.weight_decay * theta[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace cfgnn
