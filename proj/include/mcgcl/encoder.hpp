#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mcgcl/graph.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

enum class Activation : std::uint8_t { softmax, relu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view text);

struct NodeEmbeddings {
  Tensor users;
  Tensor items;
  std::string tag;
};

// Splits a stacked (users + items) x d matrix into its role blocks.
NodeEmbeddings split_roles(const Tensor& stacked, std::size_t users, std::string tag = {});
Tensor stack_roles(const NodeEmbeddings& e);

// K square layers; one instance per label, shared by both augmented views of that label.
struct GcnEncoder {
  EdgeLabel label = EdgeLabel::High;
  Activation activation = Activation::softmax;
  std::vector<Tensor> weights;

  static GcnEncoder create(EdgeLabel label, std::size_t dim, std::size_t layers, Activation activation, Rng& rng);
  std::size_t dim() const;
  std::vector<Tensor> parameters() const { return weights; }
};

// H <- act(A * H * W) for each layer, act = row softmax or relu.
Tensor gcn_forward(const GcnEncoder& encoder, const Tensor& adjacency, const Tensor& h0);

NodeEmbeddings gcn_forward(const GcnEncoder& encoder, const BipartiteGraph& graph, const NodeEmbeddings& h0);

// An adjacency tagged with the label of the subgraph it was built from.
struct LabelView {
  EdgeLabel label;
  Tensor adjacency;
};

LabelView make_view(EdgeLabel label, const BipartiteGraph& subgraph);

// Both views go through the same weights. Throws ContractError if a view's
// label differs from the encoder's.
std::pair<Tensor, Tensor> encode_label_pair(const GcnEncoder& encoder, const LabelView& view_t,
                                            const LabelView& view_t2, const Tensor& h0);

std::pair<NodeEmbeddings, NodeEmbeddings> encode_label_pair(const GcnEncoder& encoder, const BipartiteGraph& g_t,
                                                            const BipartiteGraph& g_t2, const NodeEmbeddings& h0);

}  // namespace mcgcl
