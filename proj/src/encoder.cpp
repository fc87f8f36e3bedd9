#include "mcgcl/encoder.hpp"

#include <numeric>

#include "mcgcl/errors.hpp"
#include "mcgcl/init.hpp"

namespace mcgcl {

std::string_view activation_name(Activation a) { return a == Activation::softmax ? "softmax" : "relu"; }

Activation parse_activation(std::string_view text) {
  if (text == "softmax") return Activation::softmax;
  if (text == "relu") return Activation::relu;
  throw ConfigError("activation must be softmax or relu, got '" + std::string(text) + "'");
}

NodeEmbeddings split_roles(const Tensor& stacked, std::size_t users, std::string tag) {
  if (users > stacked.rows()) throw DimensionError("split_roles: more users than rows");
  std::vector<std::size_t> u(users), i(stacked.rows() - users);
  std::iota(u.begin(), u.end(), std::size_t{0});
  std::iota(i.begin(), i.end(), users);
  return {ops::gather_rows(stacked, u), ops::gather_rows(stacked, i), std::move(tag)};
}

Tensor stack_roles(const NodeEmbeddings& e) {
  if (e.users.cols() != e.items.cols()) throw DimensionError("stack_roles: column counts differ");
  const std::size_t n = e.users.rows() + e.items.rows();
  std::vector<std::size_t> u(e.users.rows()), i(e.items.rows());
  std::iota(u.begin(), u.end(), std::size_t{0});
  std::iota(i.begin(), i.end(), e.users.rows());
  return ops::add(ops::scatter_rows(e.users, u, n), ops::scatter_rows(e.items, i, n));
}

GcnEncoder GcnEncoder::create(EdgeLabel label, std::size_t dim, std::size_t layers, Activation activation, Rng& rng) {
  GcnEncoder enc;
  enc.label = label;
  enc.activation = activation;
  for (std::size_t k = 0; k < layers; ++k) enc.weights.push_back(xavier_parameter(dim, dim, rng));
  return enc;
}

std::size_t GcnEncoder::dim() const { return weights.empty() ? 0 : weights.front().rows(); }

Tensor gcn_forward(const GcnEncoder& encoder, const Tensor& adjacency, const Tensor& h0) {
  if (adjacency.rows() != adjacency.cols() || adjacency.cols() != h0.rows()) {
    throw DimensionError("gcn_forward: adjacency " + shape_string(adjacency.rows(), adjacency.cols()) +
                         " vs embeddings " + shape_string(h0.rows(), h0.cols()));
  }
  Tensor h = h0;
  for (const auto& w : encoder.weights) {
    Tensor z = ops::matmul(ops::matmul(adjacency, h), w);
    h = encoder.activation == Activation::softmax ? ops::row_softmax(z) : ops::relu(z);
  }
  return h;
}

NodeEmbeddings gcn_forward(const GcnEncoder& encoder, const BipartiteGraph& graph, const NodeEmbeddings& h0) {
  if (h0.users.rows() != graph.user_count() || h0.items.rows() != graph.item_count()) {
    throw DimensionError("gcn_forward: embedding rows do not match graph node counts");
  }
  Tensor adj = Tensor::sparse(normalize_adjacency(graph));
  return split_roles(gcn_forward(encoder, adj, stack_roles(h0)), graph.user_count(),
                     std::string(label_name(encoder.label)));
}

LabelView make_view(EdgeLabel label, const BipartiteGraph& subgraph) {
  for (const auto& e : subgraph.edges()) {
    if (e.label != label) throw ContractError("make_view: subgraph contains a " + std::string(label_name(e.label)) + " edge");
  }
  return {label, Tensor::sparse(normalize_adjacency(subgraph))};
}

std::pair<Tensor, Tensor> encode_label_pair(const GcnEncoder& encoder, const LabelView& view_t,
                                            const LabelView& view_t2, const Tensor& h0) {
  if (view_t.label != encoder.label || view_t2.label != encoder.label) {
    throw ContractError("encode_label_pair: view label does not match the " + std::string(label_name(encoder.label)) +
                        " encoder");
  }
  return {gcn_forward(encoder, view_t.adjacency, h0), gcn_forward(encoder, view_t2.adjacency, h0)};
}

std::pair<NodeEmbeddings, NodeEmbeddings> encode_label_pair(const GcnEncoder& encoder, const BipartiteGraph& g_t,
                                                            const BipartiteGraph& g_t2, const NodeEmbeddings& h0) {
  auto [a, b] = encode_label_pair(encoder, make_view(encoder.label, g_t), make_view(encoder.label, g_t2),
                                  stack_roles(h0));
  const std::string tag(label_name(encoder.label));
  return {split_roles(a, g_t.user_count(), tag + ".t"), split_roles(b, g_t2.user_count(), tag + ".t2")};
}

}  // namespace mcgcl
