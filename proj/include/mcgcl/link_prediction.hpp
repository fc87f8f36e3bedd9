#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcgcl/graph.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

// softmax(tanh([z_item | z_user] W1 + b1) W2 + b2)
struct PredictionHead {
  Tensor w1;  // 2d x d
  Tensor b1;  // 1 x d
  Tensor w2;  // d x labels
  Tensor b2;  // 1 x labels

  static PredictionHead create(std::size_t dim, std::size_t labels, Rng& rng);
  std::size_t dim() const { return w1.cols(); }
  std::size_t labels() const { return w2.cols(); }
  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

// Row e is the label distribution of edges[e].
Tensor predict_edges(const Tensor& z_user, const Tensor& z_item, std::span<const Edge> edges,
                     const PredictionHead& head);

Matrix one_hot(std::span<const Edge> edges, LabelMode mode);
std::vector<std::size_t> class_indices(std::span<const Edge> edges, LabelMode mode);

// sum_n -y_n . log(p_n)
Tensor cross_entropy(const Tensor& probs, const Matrix& labels);

// sum_n ||z_n - mean(z)||^2
Tensor readout_regularizer(const Tensor& z);

Tensor main_loss(const Tensor& probs, const Matrix& labels, const Tensor& z_user, const Tensor& z_item, double eta);

struct Metrics {
  std::optional<double> auc;  // absent when no class has both positives and negatives
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> class_auc;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

// Rank-statistic AUC with averaged tie ranks; absent if either side is empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> row);

// Macro one-vs-rest AUC and F1 from argmax. Classes lacking positives or
// negatives are left out of the AUC average with a warning.
Metrics evaluate(const Matrix& probs, std::span<const std::size_t> labels);

}  // namespace mcgcl
