#include "mcgcl/contrastive.hpp"

#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"

namespace mcgcl {

namespace {
thread_local std::uint64_t evaluations = 0;
}

std::string_view sign_name(CrossLossSign s) { return s == CrossLossSign::paper ? "paper" : "repulsive"; }

CrossLossSign parse_sign(std::string_view text) {
  if (text == "paper") return CrossLossSign::paper;
  if (text == "repulsive") return CrossLossSign::repulsive;
  throw ConfigError("cross_loss_sign must be paper or repulsive, got '" + std::string(text) + "'");
}

std::uint64_t similarity_evaluations() { return evaluations; }

Tensor info_nce(const Tensor& anchor, const Tensor& counterpart, double temperature, std::string_view role) {
  if (anchor.rows() != counterpart.rows() || anchor.cols() != counterpart.cols()) {
    throw DimensionError("info_nce: " + shape_string(anchor.rows(), anchor.cols()) + " vs " +
                         shape_string(counterpart.rows(), counterpart.cols()));
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const std::size_t n = anchor.rows();
  if (n == 0) return Tensor::scalar(0.0);
  if (n == 1) {
    warn("contrastive: single " + std::string(role) + " node, term skipped");
    return Tensor::scalar(0.0);
  }
  evaluations += n * n;
  const double inv_t = 1.0 / temperature;
  Tensor a = ops::row_l2_normalize(anchor);
  Tensor b = ops::row_l2_normalize(counterpart);
  Tensor sim = ops::scale(ops::matmul(a, ops::transpose(b)), inv_t);
  Matrix off(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off(i, i) = 0.0;
  Tensor negatives = ops::row_sum(ops::multiply(ops::exp(sim), Tensor::constant(std::move(off))));
  Tensor positives = ops::scale(ops::cosine_similarity_rows(anchor, counterpart), inv_t);
  return ops::mean_rows(ops::subtract(ops::log(negatives), positives));
}

Tensor same_encoder_loss(const NodeEmbeddings& view_t, const NodeEmbeddings& view_t2, double temperature) {
  return ops::add(info_nce(view_t.items, view_t2.items, temperature, "item"),
                  info_nce(view_t.users, view_t2.users, temperature, "user"));
}

Tensor sum_augmentation_losses(const std::map<EdgeLabel, Tensor>& per_label) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto& [label, loss] : per_label) total = ops::add(total, loss);
  return total;
}

Tensor cross_encoder_loss(const std::map<EdgeLabel, NodeEmbeddings>& projections, double temperature,
                          CrossLossSign sign) {
  if (projections.size() < 2) {
    warn("cross-encoder loss needs at least two labels; returning 0");
    return Tensor::scalar(0.0);
  }
  Tensor total = Tensor::scalar(0.0);
  for (const auto& [a, za] : projections) {
    for (const auto& [b, zb] : projections) {
      if (a == b) continue;
      total = ops::add(total, same_encoder_loss(za, zb, temperature));
    }
  }
  return sign == CrossLossSign::paper ? total : ops::scale(total, -1.0);
}

}  // namespace mcgcl
