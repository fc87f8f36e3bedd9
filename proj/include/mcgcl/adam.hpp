#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcgcl/tensor.hpp"

namespace mcgcl {

struct AdamOptions {
  double learning_rate = 0.005;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers are keyed by position in the parameter list, so the same
// list (same order) must be passed to every step.
struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps), with g := grad + weight_decay * theta.
// Gradients are zeroed afterwards.
void adam_step(AdamState& state, std::span<Tensor> params);

}  // namespace mcgcl
