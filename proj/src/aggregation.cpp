#include "mcgcl/aggregation.hpp"

#include <cmath>

#include "mcgcl/errors.hpp"
#include "mcgcl/init.hpp"

namespace mcgcl {

AugmentationMerger AugmentationMerger::create(std::size_t dim, Rng& rng) {
  AugmentationMerger m;
  m.w = xavier_parameter(dim, dim, rng);
  m.b = zeros_parameter(1, dim);
  m.a_t = xavier_parameter(dim, 1, rng);
  m.a_t2 = xavier_parameter(dim, 1, rng);
  return m;
}

MergeResult merge_augmentations(const Tensor& h_t, const Tensor& h_t2, const AugmentationMerger& merger) {
  if (h_t.rows() != h_t2.rows() || h_t.cols() != h_t2.cols()) {
    throw DimensionError("merge_augmentations: " + shape_string(h_t.rows(), h_t.cols()) + " vs " +
                         shape_string(h_t2.rows(), h_t2.cols()));
  }
  auto score = [&](const Tensor& h, const Tensor& a) {
    return ops::matmul(ops::mean_rows(ops::tanh(ops::add(ops::matmul(h, merger.w), merger.b))), a);
  };
  Tensor beta = ops::row_softmax(ops::concat_columns({score(h_t, merger.a_t), score(h_t2, merger.a_t2)}));
  Tensor merged = ops::add(ops::multiply(h_t, ops::column(beta, 0)), ops::multiply(h_t2, ops::column(beta, 1)));
  return {merged, beta};
}

ProjectionHead ProjectionHead::create(std::size_t dim, Rng& rng) {
  ProjectionHead p;
  p.a1 = xavier_parameter(dim, dim, rng);
  p.b1 = zeros_parameter(1, dim);
  p.a2 = xavier_parameter(dim, dim, rng);
  p.b2 = zeros_parameter(1, dim);
  return p;
}

Tensor project(const Tensor& h, const ProjectionHead& head) {
  return ops::add(ops::matmul(ops::tanh(ops::add(ops::matmul(h, head.a1), head.b1)), head.a2), head.b2);
}

LabelAttention LabelAttention::create(std::size_t labels, std::size_t dim, Rng& rng) {
  LabelAttention a;
  for (std::size_t l = 0; l < labels; ++l) {
    a.w_q.push_back(xavier_parameter(dim, dim, rng));
    a.w_k.push_back(xavier_parameter(dim, dim, rng));
  }
  return a;
}

std::vector<Tensor> LabelAttention::parameters() const {
  std::vector<Tensor> p;
  for (std::size_t l = 0; l < w_q.size(); ++l) {
    p.push_back(w_q[l]);
    p.push_back(w_k[l]);
  }
  return p;
}

AttentionResult attention_aggregate_labels(std::span<const Tensor> per_label, const LabelAttention& attn) {
  if (per_label.empty() || per_label.size() != attn.w_q.size()) {
    throw ContractError("attention_aggregate_labels: " + std::to_string(per_label.size()) + " inputs for " +
                        std::to_string(attn.w_q.size()) + " labels");
  }
  for (const auto& h : per_label) {
    if (h.rows() != per_label[0].rows() || h.cols() != per_label[0].cols()) {
      throw DimensionError("attention_aggregate_labels: label matrices differ in shape");
    }
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(per_label[0].cols()));
  std::vector<Tensor> scores;
  for (std::size_t l = 0; l < per_label.size(); ++l) {
    Tensor q = ops::matmul(per_label[l], attn.w_q[l]);
    Tensor k = ops::matmul(per_label[l], attn.w_k[l]);
    scores.push_back(ops::scale(ops::row_sum(ops::multiply(q, k)), inv_sqrt_d));
  }
  Tensor alpha = ops::row_softmax(ops::concat_columns(scores));
  Tensor out = ops::multiply(per_label[0], ops::column(alpha, 0));
  for (std::size_t l = 1; l < per_label.size(); ++l) {
    out = ops::add(out, ops::multiply(per_label[l], ops::column(alpha, l)));
  }
  return {out, alpha};
}

std::string_view aggregation_name(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::attention: return "attention";
    case AggregationMode::mlp: return "mlp";
    case AggregationMode::average: return "average";
  }
  return "?";
}

AggregationMode parse_aggregation(std::string_view text) {
  if (text == "attention") return AggregationMode::attention;
  if (text == "mlp") return AggregationMode::mlp;
  if (text == "average") return AggregationMode::average;
  throw ConfigError("aggregation must be attention, mlp or average, got '" + std::string(text) + "'");
}

LabelAggregator LabelAggregator::create(AggregationMode mode, std::size_t labels, std::size_t dim, Rng& rng) {
  LabelAggregator agg;
  agg.mode = mode;
  if (mode == AggregationMode::attention) {
    agg.attention = LabelAttention::create(labels, dim, rng);
  } else if (mode == AggregationMode::mlp) {
    agg.w1 = xavier_parameter(labels * dim, dim, rng);
    agg.b1 = zeros_parameter(1, dim);
    agg.w2 = xavier_parameter(dim, dim, rng);
    agg.b2 = zeros_parameter(1, dim);
  }
  return agg;
}

Tensor LabelAggregator::apply(std::span<const Tensor> per_label) const {
  switch (mode) {
    case AggregationMode::attention:
      return attention_aggregate_labels(per_label, attention).output;
    case AggregationMode::mlp: {
      Tensor hidden = ops::tanh(ops::add(ops::matmul(ops::concat_columns(per_label), w1), b1));
      return ops::add(ops::matmul(hidden, w2), b2);
    }
    case AggregationMode::average: {
      if (per_label.empty()) throw ContractError("aggregate: no labels");
      Tensor total = per_label[0];
      for (std::size_t l = 1; l < per_label.size(); ++l) total = ops::add(total, per_label[l]);
      return ops::scale(total, 1.0 / static_cast<double>(per_label.size()));
    }
  }
  throw ContractError("aggregate: unknown mode");
}

std::vector<Tensor> LabelAggregator::parameters() const {
  switch (mode) {
    case AggregationMode::attention: return attention.parameters();
    case AggregationMode::mlp: return {w1, b1, w2, b2};
    case AggregationMode::average: return {};
  }
  return {};
}

}  // namespace mcgcl
