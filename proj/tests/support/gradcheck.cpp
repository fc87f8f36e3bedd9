#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mcgcl::testing {

GradReport check_gradients(std::vector<Tensor> params, const std::function<Tensor()>& loss,
                           const GradTolerance& tol) {
  for (auto& p : params) p.clear_grad();
  {
    Tape tape;
    Recording recording(tape);
    Tensor l = loss();
    backward(tape, l);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : Matrix(p.rows(), p.cols()));

  GradReport report;
  report.worst_excess = -1.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k].mutable_value();
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        const double original = v(r, c);
        v(r, c) = original + tol.step;
        const double plus = loss().item();
        v(r, c) = original - tol.step;
        const double minus = loss().item();
        v(r, c) = original;
        const double numeric = (plus - minus) / (2.0 * tol.step);
        const double a = analytic[k](r, c);
        const double excess = std::abs(a - numeric) - (tol.atol + tol.rtol * std::max(std::abs(a), std::abs(numeric)));
        ++report.checked;
        report.worst_excess = std::max(report.worst_excess, excess);
        if (excess > 0.0 && report.ok) {
          report.ok = false;
          std::ostringstream os;
          os << "parameter " << k << " entry (" << r << ", " << c << "): analytic " << a << ", numeric " << numeric;
          report.detail = os.str();
        }
      }
    }
    params[k].clear_grad();
  }
  return report;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

std::function<Tensor()> weighted_sum(std::function<Tensor()> f, Rng& rng) {
  const Tensor probe = f();
  Tensor weights = Tensor::constant(random_matrix(probe.rows(), probe.cols(), rng));
  return [f = std::move(f), weights] { return ops::sum(ops::multiply(f(), weights)); };
}

BipartiteGraph random_graph(std::size_t users, std::size_t items, std::size_t edges, LabelMode mode, Rng& rng) {
  edges = std::min(edges, users * items);
  const auto labels = labels_of(mode);
  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> out;
  while (out.size() < edges) {
    const auto u = static_cast<std::uint32_t>(rng.below(users));
    const auto i = static_cast<std::uint32_t>(rng.below(items));
    if (!seen.insert((std::uint64_t{u} << 32) | i).second) continue;
    out.push_back({u, i, labels[rng.below(labels.size())]});
  }
  return BipartiteGraph(users, items, std::move(out), mode);
}

}  // namespace mcgcl::testing
