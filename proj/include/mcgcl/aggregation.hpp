#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

// Attention merge of the two augmentation views of one role.
struct AugmentationMerger {
  Tensor w;     // d x d
  Tensor b;     // 1 x d
  Tensor a_t;   // d x 1
  Tensor a_t2;  // d x 1

  static AugmentationMerger create(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const { return {w, b, a_t, a_t2}; }
};

struct MergeResult {
  Tensor merged;
  Tensor beta;  // 1 x 2
};

// s_v = mean_n a_v^T tanh(W h_n + b); beta = softmax(s_t, s_t2); beta_t H_t + beta_t2 H_t2.
MergeResult merge_augmentations(const Tensor& h_t, const Tensor& h_t2, const AugmentationMerger& merger);

// Z = tanh(H A1 + b1) A2 + b2.
struct ProjectionHead {
  Tensor a1, b1, a2, b2;

  static ProjectionHead create(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const { return {a1, b1, a2, b2}; }
};

Tensor project(const Tensor& h, const ProjectionHead& head);

// Per-label query and key maps for one role.
struct LabelAttention {
  std::vector<Tensor> w_q;  // one d x d per label
  std::vector<Tensor> w_k;

  static LabelAttention create(std::size_t labels, std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

struct AttentionResult {
  Tensor output;
  Tensor alpha;  // n x labels
};

// Per node: score_l = <h W_Q^l, h W_K^l> / sqrt(d), alpha = softmax over labels,
// output = sum_l alpha_l H^l.
AttentionResult attention_aggregate_labels(std::span<const Tensor> per_label, const LabelAttention& attn);

enum class AggregationMode : std::uint8_t { attention, mlp, average };

std::string_view aggregation_name(AggregationMode mode);
AggregationMode parse_aggregation(std::string_view text);

// Combines the per-label representations of one role into one matrix.
struct LabelAggregator {
  AggregationMode mode = AggregationMode::attention;
  LabelAttention attention;
  // mlp mode: tanh([H^1 | ... | H^L] W1 + b1) W2 + b2
  Tensor w1, b1, w2, b2;

  static LabelAggregator create(AggregationMode mode, std::size_t labels, std::size_t dim, Rng& rng);
  Tensor apply(std::span<const Tensor> per_label) const;
  std::vector<Tensor> parameters() const;
};

}  // namespace mcgcl
