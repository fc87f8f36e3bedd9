#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mcgcl/adam.hpp"
#include "mcgcl/aggregation.hpp"
#include "mcgcl/graph.hpp"
#include "mcgcl/link_prediction.hpp"
#include "mcgcl/pipeline.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

// Per edge: sum_c -y_c log p_c - (1 - y_c) log(1 - p_c), p clamped to [1e-30, 1 - 1e-30].
std::vector<double> edge_entropy(const Matrix& probs, const Matrix& labels);

// ceil(epsilon * n) for epsilon in (0, 1], at least 1 when n >= 1.
std::size_t hard_count(std::size_t n, double epsilon);

struct HardSampleSet {
  std::vector<std::size_t> indices;  // positions in the mined edge list, highest entropy first
  std::vector<Edge> edges;
  std::vector<double> entropy;
  std::vector<std::uint8_t> user_mask;  // M1
  std::vector<std::uint8_t> item_mask;  // M2

  std::size_t size() const { return edges.size(); }
  // edge_index, user, item, label, entropy
  void write_tsv(std::ostream& out) const;
};

// Highest entropies first; equal entropies resolved toward the lower edge index.
HardSampleSet select_hard(std::span<const double> entropies, std::span<const Edge> edges, double epsilon,
                          std::size_t users, std::size_t items);

// Rows with mask 0 are zeroed.
Tensor mask_extract(const Tensor& z, std::span<const std::uint8_t> mask);

std::vector<std::size_t> masked_rows(std::span<const std::uint8_t> mask);

enum class Side : std::uint8_t { users, items };

struct HomogeneousGraph {
  struct Arc {
    std::uint32_t from;
    std::uint32_t to;
    double score;
    EdgeLabel label;
  };

  std::size_t nodes = 0;
  Side side = Side::users;
  LabelMode mode = LabelMode::multi;
  std::vector<Arc> arcs;
};

// S = row_softmax(P P^T), P = project(h, mlp), over the rows of h (the masked
// nodes). Keeps the k_top best-scoring targets per row, self excluded, and
// labels arcs by score tertile (median split in binary mode).
HomogeneousGraph build_homogeneous_graph(const Matrix& h, std::size_t k_top, const ProjectionHead& mlp, LabelMode mode,
                                         Side side);

// remove: each arc dropped with probability p. add: floor(p * arcs) new arcs
// between distinct nodes, labels drawn from the arc label distribution.
HomogeneousGraph augment(const HomogeneousGraph& graph, AugmentKind kind, double p, Rng& rng);

// Symmetrized, normalized adjacency per label in labels_of(mode) order.
ViewSet label_views(const HomogeneousGraph& graph);

// CE over hard edges + ||Z^M_U . M1 - Z^S_U||^2 + ||Z^M_I . M2 - Z^S_I||^2.
Tensor subtask_loss(const Tensor& probs, const Matrix& labels, const Tensor& zs_user, const Tensor& zs_item,
                    const Tensor& zm_user, const Tensor& zm_item, std::span<const std::uint8_t> user_mask,
                    std::span<const std::uint8_t> item_mask);

struct SubtaskOptions {
  PipelineOptions pipeline;
  LabelMode mode = LabelMode::multi;
  std::size_t k_top = 10;
  double p_remove = 0.01;
  double p_add = 0.01;
  std::size_t epochs = 50;
  double mu = 0.6;
  double gamma = 0.7;
  AdamOptions adam;
  std::uint64_t seed = 1;
};

struct SubtaskLosses {
  double contrastive_same = 0.0;   // L_Sp
  double contrastive_cross = 0.0;  // L_Sc
  double subtask = 0.0;            // L_S
  double objective = 0.0;          // mu (L_Sp + L_Sc) + gamma L_S
};

struct SubtaskResult {
  Matrix z_user;  // full shape; unmasked rows are zero
  Matrix z_item;
  std::vector<SubtaskLosses> epochs;
  std::uint64_t similarity_evaluations_per_epoch = 0;
  std::size_t masked_users = 0;
  std::size_t masked_items = 0;
  bool user_side_trained = false;
  bool item_side_trained = false;
  HomogeneousGraph user_graph;
  HomogeneousGraph item_graph;
};

// Trains the homogeneous-graph pipelines on the masked nodes for `epochs`
// epochs. Each side starts from its masked main-task rows; Z^S = H0 + A W_out
// with A the aggregated pipeline output and W_out starting at zero. A side
// with fewer than two masked nodes keeps its masked main-task rows.
SubtaskResult run_subtask(const HardSampleSet& hard, const Matrix& zm_user, const Matrix& zm_item,
                          const SubtaskOptions& options);

}  // namespace mcgcl
