#pragma once
// Central finite-difference gradient checks and the seeded case registry
// shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mcgcl/graph.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl::testing {

struct GradTolerance {
  double step = 1e-5;
  double rtol = 1e-4;
  double atol = 1e-7;
};

struct GradReport {
  bool ok = true;
  std::size_t checked = 0;
  double worst_excess = 0.0;  // max of |a - n| - (atol + rtol max(|a|, |n|)), <= 0 when ok
  std::string detail;
};

// Compares the taped gradient of `loss` with central differences on every
// entry of every parameter. `loss` must be a pure function of the parameter
// values.
GradReport check_gradients(std::vector<Tensor> params, const std::function<Tensor()>& loss,
                           const GradTolerance& tol = {});

// Wraps f as sum(f() .* R) with R drawn once, so every output entry gets its own weight.
std::function<Tensor()> weighted_sum(std::function<Tensor()> f, Rng& rng);

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0);

// Distinct random (user, item) pairs with labels drawn from the mode.
BipartiteGraph random_graph(std::size_t users, std::size_t items, std::size_t edges, LabelMode mode, Rng& rng);

struct GradCase {
  std::string name;
  // Builds an instance from the seed and checks it.
  std::function<GradReport(std::uint64_t seed)> run;
};

// Primitive operations and their compositions.
std::vector<GradCase> primitive_cases();
// Model components: GCN layers, losses, merges, aggregation, heads, fusion.
std::vector<GradCase> model_cases();

}  // namespace mcgcl::testing
