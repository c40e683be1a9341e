#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfgnn/tensor.hpp"

namespace cfgnn {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_params(std::span<const Tensor> params, double lr,
                              double weight_decay);
};

// Bias-corrected Adam update in place; weight decay enters as an L2 term on
// the gradient.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace cfgnn
