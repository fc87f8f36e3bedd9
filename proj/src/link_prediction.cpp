#include "mcgcl/link_prediction.hpp"

#include <algorithm>
#include <numeric>

#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"
#include "mcgcl/init.hpp"

namespace mcgcl {

PredictionHead PredictionHead::create(std::size_t dim, std::size_t labels, Rng& rng) {
  PredictionHead h;
  h.w1 = xavier_parameter(2 * dim, dim, rng);
  h.b1 = zeros_parameter(1, dim);
  h.w2 = xavier_parameter(dim, labels, rng);
  h.b2 = zeros_parameter(1, labels);
  return h;
}

Tensor predict_edges(const Tensor& z_user, const Tensor& z_item, std::span<const Edge> edges,
                     const PredictionHead& head) {
  std::vector<std::size_t> users, items;
  users.reserve(edges.size());
  items.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.user >= z_user.rows() || e.item >= z_item.rows()) {
      throw ContractError("predict_edges: edge (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                          ") outside embeddings with " + std::to_string(z_user.rows()) + " users and " +
                          std::to_string(z_item.rows()) + " items");
    }
    users.push_back(e.user);
    items.push_back(e.item);
  }
  Tensor x = ops::concat_columns({ops::gather_rows(z_item, items), ops::gather_rows(z_user, users)});
  Tensor hidden = ops::tanh(ops::add(ops::matmul(x, head.w1), head.b1));
  return ops::row_softmax(ops::add(ops::matmul(hidden, head.w2), head.b2));
}

Matrix one_hot(std::span<const Edge> edges, LabelMode mode) {
  Matrix y(edges.size(), label_count(mode));
  for (std::size_t n = 0; n < edges.size(); ++n) y(n, class_index(edges[n].label, mode)) = 1.0;
  return y;
}

std::vector<std::size_t> class_indices(std::span<const Edge> edges, LabelMode mode) {
  std::vector<std::size_t> c;
  c.reserve(edges.size());
  for (const auto& e : edges) c.push_back(class_index(e.label, mode));
  return c;
}

Tensor cross_entropy(const Tensor& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
    throw DimensionError("cross_entropy: probabilities " + shape_string(probs.rows(), probs.cols()) + " vs labels " +
                         shape_string(labels.rows(), labels.cols()));
  }
  if (probs.rows() == 0) return Tensor::scalar(0.0);
  return ops::scale(ops::sum(ops::multiply(ops::log(probs), Tensor::constant(labels))), -1.0);
}

Tensor readout_regularizer(const Tensor& z) {
  if (z.rows() == 0) return Tensor::scalar(0.0);
  return ops::squared_l2(ops::subtract(z, ops::mean_rows(z)));
}

Tensor main_loss(const Tensor& probs, const Matrix& labels, const Tensor& z_user, const Tensor& z_item, double eta) {
  Tensor reg = ops::add(readout_regularizer(z_user), readout_regularizer(z_item));
  return ops::add(cross_entropy(probs, labels), ops::scale(reg, eta));
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DimensionError("binary_auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Doubled ranks keep the tie averaging in integers.
  std::uint64_t doubled_rank_sum = 0, n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled = (i + 1) + j;  // 2 * mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        doubled_rank_sum += doubled;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const std::uint64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos * n_neg));
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

Metrics evaluate(const Matrix& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size()) throw DimensionError("evaluate: probability rows and labels differ");
  const std::size_t classes = probs.cols();
  const std::size_t n = labels.size();
  for (auto l : labels)
    if (l >= classes) throw ContractError("evaluate: label index out of range");
  Metrics m;
  m.class_auc.resize(classes);
  m.precision.assign(classes, 0.0);
  m.recall.assign(classes, 0.0);
  m.f1.assign(classes, 0.0);
  if (n == 0) {
    warn("evaluate: no edges to score");
    return m;
  }

  double auc_sum = 0.0;
  std::size_t auc_classes = 0;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> positive(n);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs(i, c);
      positive[i] = labels[i] == c;
    }
    m.class_auc[c] = binary_auc(scores, positive);
    if (m.class_auc[c]) {
      auc_sum += *m.class_auc[c];
      ++auc_classes;
    } else {
      warn("evaluate: class " + std::to_string(c) + " lacks positives or negatives; excluded from AUC");
    }
  }
  if (auc_classes > 0) m.auc = auc_sum / static_cast<double>(auc_classes);

  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pred = argmax(probs.row(i));
    if (pred == labels[i]) {
      ++tp[pred];
      ++correct;
    } else {
      ++fp[pred];
      ++fn[labels[i]];
    }
  }
  double f1_sum = 0.0;
  std::size_t f1_classes = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto t = static_cast<double>(tp[c]);
    if (tp[c] + fp[c] > 0) m.precision[c] = t / static_cast<double>(tp[c] + fp[c]);
    if (tp[c] + fn[c] > 0) m.recall[c] = t / static_cast<double>(tp[c] + fn[c]);
    if (tp[c] + fp[c] + fn[c] == 0) continue;  // class neither present nor predicted
    m.f1[c] = 2.0 * t / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += m.f1[c];
    ++f1_classes;
  }
  m.macro_f1 = f1_classes ? f1_sum / static_cast<double>(f1_classes) : 0.0;
  const std::size_t wrong = n - correct;
  m.micro_f1 = 2.0 * static_cast<double>(correct) / static_cast<double>(2 * correct + 2 * wrong);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return m;
}

}  // namespace mcgcl
