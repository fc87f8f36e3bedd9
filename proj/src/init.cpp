#include "mcgcl/init.hpp"

#include <cmath>

namespace mcgcl {

Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  const double bound = rows + cols == 0 ? 0.0 : std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace mcgcl
