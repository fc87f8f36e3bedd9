#include "mcgcl/adam.hpp"

#include <cmath>

#include "mcgcl/errors.hpp"

namespace mcgcl {

void adam_step(AdamState& state, std::span<Tensor> params) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.rows(), p.cols());
      state.second_moment.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: parameter list changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(k) + " has no gradient");
    }
    if (state.first_moment[k].rows() != params[k].rows() || state.first_moment[k].cols() != params[k].cols()) {
      throw ContractError("adam_step: moment buffer shape mismatch for parameter " + std::to_string(k));
    }
  }

  const auto& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].mutable_value().values();
    auto g = params[k].grad().values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + o.weight_decay * theta[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      theta[i] -= o.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.epsilon);
    }
    if (!params[k].value().all_finite()) {
      throw NumericError("adam_step: parameter " + std::to_string(k) + " became non-finite");
    }
    params[k].zero_grad();
  }
}

}  // namespace mcgcl
