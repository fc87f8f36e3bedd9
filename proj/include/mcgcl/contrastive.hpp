#pragma once

#include <cstdint>
#include <map>
#include <string_view>

#include "mcgcl/encoder.hpp"
#include "mcgcl/graph.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

enum class CrossLossSign : std::uint8_t { paper, repulsive };

std::string_view sign_name(CrossLossSign s);
CrossLossSign parse_sign(std::string_view text);

// Pairwise similarity evaluations performed by info_nce on this thread.
std::uint64_t similarity_evaluations();

// Counts the similarity evaluations made while in scope.
class SimilarityCounter {
 public:
  SimilarityCounter() : start_(similarity_evaluations()) {}
  std::uint64_t count() const { return similarity_evaluations() - start_; }

 private:
  std::uint64_t start_;
};

// Mean over rows i of  -s_ii/tau + log sum_{j != i} exp(s_ij/tau),  s = cosine similarity
// between row i of `anchor` and row j of `counterpart`. A role with no rows
// contributes 0; a single row contributes 0 with a warning.
Tensor info_nce(const Tensor& anchor, const Tensor& counterpart, double temperature = 1.0,
                std::string_view role = "node");

// Item term plus user term between two views of the same label.
Tensor same_encoder_loss(const NodeEmbeddings& view_t, const NodeEmbeddings& view_t2, double temperature = 1.0);

Tensor sum_augmentation_losses(const std::map<EdgeLabel, Tensor>& per_label);

// Sum over ordered label pairs (a, b), a != b, of the same InfoNCE form
// between Z^a and Z^b. The repulsive sign negates every pair term.
Tensor cross_encoder_loss(const std::map<EdgeLabel, NodeEmbeddings>& projections, double temperature = 1.0,
                          CrossLossSign sign = CrossLossSign::paper);

}  // namespace mcgcl
