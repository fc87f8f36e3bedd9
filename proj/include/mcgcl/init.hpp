#pragma once

#include <cstddef>

#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

// U(-b, b) with b = sqrt(6 / (rows + cols)).
Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

inline Tensor xavier_parameter(std::size_t rows, std::size_t cols, Rng& rng) {
  return Tensor::parameter(xavier_uniform(rows, cols, rng));
}

inline Tensor zeros_parameter(std::size_t rows, std::size_t cols) { return Tensor::parameter(Matrix(rows, cols)); }

}  // namespace mcgcl
