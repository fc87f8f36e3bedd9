#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "mcgcl/aggregation.hpp"
#include "mcgcl/contrastive.hpp"
#include "mcgcl/encoder.hpp"
#include "mcgcl/framework.hpp"
#include "mcgcl/link_prediction.hpp"
#include "mcgcl/pipeline.hpp"
#include "mcgcl/subtask.hpp"

namespace mcgcl::testing {

namespace {

struct Instance {
  std::vector<Tensor> params;
  std::function<Tensor()> loss;
};

GradCase make_case(std::string name, std::function<Instance(Rng&)> build) {
  return {name, [name, build = std::move(build)](std::uint64_t seed) {
            Rng rng = Rng::derive(seed, "gradcheck." + name);
            Instance in = build(rng);
            return check_gradients(in.params, in.loss);
          }};
}

Tensor param(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(random_matrix(r, c, rng, lo, hi));
}

// Entries bounded away from zero, for kinked or clamped operations.
Tensor param_off_zero(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.values()) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor::parameter(std::move(m));
}

Instance unary(Rng& rng, Tensor x, Tensor (*op)(const Tensor&)) {
  return {{x}, weighted_sum([x, op] { return op(x); }, rng)};
}

Instance binary(Rng& rng, std::size_t br, std::size_t bc, Tensor (*op)(const Tensor&, const Tensor&)) {
  Tensor a = param(3, 4, rng);
  Tensor b = param(br, bc, rng);
  return {{a, b}, weighted_sum([a, b, op] { return op(a, b); }, rng)};
}

CsrMatrix random_sparse(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<CsrMatrix::Triplet> t;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.bernoulli(0.4)) t.push_back({r, c, rng.uniform(-1.0, 1.0)});
  return CsrMatrix::from_triplets(rows, cols, std::move(t));
}

NodeEmbeddings embeddings(std::size_t users, std::size_t items, std::size_t d, Rng& rng) {
  return {param(users, d, rng), param(items, d, rng), {}};
}

PipelineOptions small_options(Activation act, AggregationMode agg) {
  PipelineOptions o;
  o.dim = 3;
  o.layers = 2;
  o.activation = act;
  o.aggregation = agg;
  return o;
}

Instance gcn_instance(Rng& rng, Activation act) {
  const BipartiteGraph g = random_graph(3, 4, 6, LabelMode::multi, rng);
  GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 2, act, rng);
  Tensor h0 = param(g.node_count(), 3, rng);
  Tensor adj = Tensor::sparse(normalize_adjacency(g));
  std::vector<Tensor> params = enc.parameters();
  params.push_back(h0);
  return {params, weighted_sum([enc, adj, h0] { return gcn_forward(enc, adj, h0); }, rng)};
}

Instance aggregation_instance(Rng& rng, AggregationMode mode) {
  std::vector<Tensor> per_label{param(4, 3, rng), param(4, 3, rng), param(4, 3, rng)};
  LabelAggregator agg = LabelAggregator::create(mode, 3, 3, rng);
  std::vector<Tensor> params = per_label;
  for (auto& p : agg.parameters()) params.push_back(p);
  return {params, weighted_sum([agg, per_label] { return agg.apply(per_label); }, rng)};
}

Instance cross_instance(Rng& rng, CrossLossSign sign) {
  std::map<EdgeLabel, NodeEmbeddings> proj;
  std::vector<Tensor> params;
  for (EdgeLabel l : labels_of(LabelMode::multi)) {
    proj[l] = embeddings(4, 3, 3, rng);
    params.push_back(proj[l].users);
    params.push_back(proj[l].items);
  }
  return {params, [proj, sign] { return cross_encoder_loss(proj, 1.0, sign); }};
}

Instance pipeline_instance(Rng& rng, Activation act, AggregationMode agg) {
  const BipartiteGraph g = random_graph(4, 4, 10, LabelMode::multi, rng);
  const auto parts = partition_by_label(g);
  ViewSet vs;
  for (const auto& [label, sub] : parts) vs.views.push_back(make_view(label, sub));
  const BipartiteGraph g2 = random_graph(4, 4, 10, LabelMode::multi, rng);
  ViewSet vs2;
  for (const auto& [label, sub] : partition_by_label(g2)) vs2.views.push_back(make_view(label, sub));
  const auto labels = labels_of(LabelMode::multi);
  LabelPipeline pipe = LabelPipeline::create(labels, 2, small_options(act, agg), rng);
  std::vector<Tensor> h0{param(g.node_count(), 3, rng)};
  std::vector<Tensor> params = pipe.parameters();
  if (act == Activation::relu) {
    // Non-negative inputs and a positive first weight column keep every row off
    // the all-zero point, where the cosine terms are not differentiable.
    for (double& v : h0[0].mutable_value().values()) v = std::abs(v) + 0.1;
    for (std::size_t k = 0; k < labels.size() * small_options(act, agg).layers; ++k) {
      Matrix& w = params[k].mutable_value();
      for (std::size_t r = 0; r < w.rows(); ++r) w(r, 0) = std::abs(w(r, 0)) + 0.1;
    }
  }
  params.push_back(h0[0]);
  Tensor wu = Tensor::constant(random_matrix(4, 3, rng));
  Tensor wi = Tensor::constant(random_matrix(4, 3, rng));
  return {params, [=] {
            auto out = pipe.forward(h0, vs, vs2, 4);
            return ops::add(ops::add(out.same_loss, out.cross_loss),
                            ops::add(ops::sum(ops::multiply(out.aggregated[0], wu)),
                                     ops::sum(ops::multiply(out.aggregated[1], wi))));
          }};
}

}  // namespace

std::vector<GradCase> primitive_cases() {
  using ops::add, ops::subtract, ops::multiply;
  return {
      make_case("matmul",
                [](Rng& rng) {
                  Tensor a = param(3, 4, rng), b = param(4, 2, rng);
                  return Instance{{a, b}, weighted_sum([a, b] { return ops::matmul(a, b); }, rng)};
                }),
      make_case("matmul_sparse_left",
                [](Rng& rng) {
                  Tensor s = Tensor::sparse(random_sparse(5, 4, rng));
                  Tensor b = param(4, 3, rng);
                  return Instance{{b}, weighted_sum([s, b] { return ops::matmul(s, b); }, rng)};
                }),
      make_case("transpose", [](Rng& rng) { return unary(rng, param(3, 4, rng), ops::transpose); }),
      make_case("add", [](Rng& rng) { return binary(rng, 3, 4, add); }),
      make_case("add_row_broadcast", [](Rng& rng) { return binary(rng, 1, 4, add); }),
      make_case("add_column_broadcast", [](Rng& rng) { return binary(rng, 3, 1, add); }),
      make_case("add_scalar_broadcast", [](Rng& rng) { return binary(rng, 1, 1, add); }),
      make_case("subtract", [](Rng& rng) { return binary(rng, 3, 4, subtract); }),
      make_case("subtract_row_broadcast", [](Rng& rng) { return binary(rng, 1, 4, subtract); }),
      make_case("multiply", [](Rng& rng) { return binary(rng, 3, 4, multiply); }),
      make_case("multiply_column_broadcast", [](Rng& rng) { return binary(rng, 3, 1, multiply); }),
      make_case("multiply_scalar_broadcast", [](Rng& rng) { return binary(rng, 1, 1, multiply); }),
      make_case("scale",
                [](Rng& rng) {
                  Tensor a = param(3, 4, rng);
                  const double s = rng.uniform(-2.0, 2.0);
                  return Instance{{a}, weighted_sum([a, s] { return ops::scale(a, s); }, rng)};
                }),
      make_case("tanh", [](Rng& rng) { return unary(rng, param(3, 4, rng, -2.0, 2.0), ops::tanh); }),
      make_case("relu", [](Rng& rng) { return unary(rng, param_off_zero(3, 4, rng), ops::relu); }),
      make_case("row_softmax", [](Rng& rng) { return unary(rng, param(3, 4, rng, -2.0, 2.0), ops::row_softmax); }),
      make_case("log", [](Rng& rng) { return unary(rng, param(3, 4, rng, 0.5, 2.0), ops::log); }),
      make_case("exp", [](Rng& rng) { return unary(rng, param(3, 4, rng), ops::exp); }),
      make_case("concat_columns",
                [](Rng& rng) {
                  Tensor a = param(3, 2, rng), b = param(3, 1, rng), c = param(3, 3, rng);
                  return Instance{{a, b, c}, weighted_sum([a, b, c] { return ops::concat_columns({a, b, c}); }, rng)};
                }),
      make_case("row_select_by_mask",
                [](Rng& rng) {
                  Tensor a = param(5, 3, rng);
                  std::vector<std::uint8_t> mask(5);
                  for (auto& m : mask) m = rng.bernoulli(0.5) ? 1 : 0;
                  mask[0] = 1;
                  return Instance{{a}, weighted_sum([a, mask] { return ops::row_select_by_mask(a, mask); }, rng)};
                }),
      make_case("mean_rows", [](Rng& rng) { return unary(rng, param(4, 3, rng), ops::mean_rows); }),
      make_case("squared_l2", [](Rng& rng) { return unary(rng, param(4, 3, rng), ops::squared_l2); }),
      make_case("cosine_similarity_rows",
                [](Rng& rng) {
                  Tensor a = param(4, 3, rng), b = param(4, 3, rng);
                  return Instance{{a, b}, weighted_sum([a, b] { return ops::cosine_similarity_rows(a, b); }, rng)};
                }),
      make_case("row_l2_normalize", [](Rng& rng) { return unary(rng, param(4, 3, rng), ops::row_l2_normalize); }),
      make_case("sum", [](Rng& rng) { return unary(rng, param(3, 4, rng), ops::sum); }),
      make_case("row_sum", [](Rng& rng) { return unary(rng, param(3, 4, rng), ops::row_sum); }),
      make_case("column",
                [](Rng& rng) {
                  Tensor a = param(3, 4, rng);
                  const std::size_t j = rng.below(4);
                  return Instance{{a}, weighted_sum([a, j] { return ops::column(a, j); }, rng)};
                }),
      make_case("gather_rows",
                [](Rng& rng) {
                  Tensor a = param(4, 3, rng);
                  std::vector<std::size_t> rows(6);
                  for (auto& r : rows) r = rng.below(4);
                  return Instance{{a}, weighted_sum([a, rows] { return ops::gather_rows(a, rows); }, rng)};
                }),
      make_case("scatter_rows",
                [](Rng& rng) {
                  Tensor a = param(3, 2, rng);
                  std::vector<std::size_t> pos{4, 0, 2};
                  return Instance{{a}, weighted_sum([a, pos] { return ops::scatter_rows(a, pos, 6); }, rng)};
                }),
  };
}

std::vector<GradCase> model_cases() {
  return {
      make_case("gcn_layer_softmax", [](Rng& rng) { return gcn_instance(rng, Activation::softmax); }),
      make_case("gcn_layer_relu", [](Rng& rng) { return gcn_instance(rng, Activation::relu); }),
      make_case("encode_label_pair_shared_weights",
                [](Rng& rng) {
                  const BipartiteGraph g = random_graph(3, 4, 7, LabelMode::multi, rng);
                  const BipartiteGraph high = partition_by_label(g).at(EdgeLabel::High);
                  const BipartiteGraph high2 = augment(high, AugmentKind::add, 0.5, rng);
                  GcnEncoder enc = GcnEncoder::create(EdgeLabel::High, 3, 2, Activation::softmax, rng);
                  Tensor h0 = param(g.node_count(), 3, rng);
                  const LabelView v1 = make_view(EdgeLabel::High, high), v2 = make_view(EdgeLabel::High, high2);
                  Tensor r1 = Tensor::constant(random_matrix(g.node_count(), 3, rng));
                  Tensor r2 = Tensor::constant(random_matrix(g.node_count(), 3, rng));
                  std::vector<Tensor> params = enc.parameters();
                  params.push_back(h0);
                  return Instance{params, [=] {
                                    auto [a, b] = encode_label_pair(enc, v1, v2, h0);
                                    return ops::add(ops::sum(ops::multiply(a, r1)), ops::sum(ops::multiply(b, r2)));
                                  }};
                }),
      make_case("info_nce_temperature",
                [](Rng& rng) {
                  Tensor a = param(5, 3, rng), b = param(5, 3, rng);
                  const double tau = rng.uniform(0.3, 2.0);
                  return Instance{{a, b}, [a, b, tau] { return info_nce(a, b, tau); }};
                }),
      make_case("same_encoder_loss",
                [](Rng& rng) {
                  NodeEmbeddings t = embeddings(4, 5, 3, rng), t2 = embeddings(4, 5, 3, rng);
                  return Instance{{t.users, t.items, t2.users, t2.items}, [t, t2] { return same_encoder_loss(t, t2); }};
                }),
      make_case("cross_encoder_loss", [](Rng& rng) { return cross_instance(rng, CrossLossSign::paper); }),
      make_case("cross_encoder_loss_repulsive", [](Rng& rng) { return cross_instance(rng, CrossLossSign::repulsive); }),
      make_case("augmentation_merge_attention",
                [](Rng& rng) {
                  Tensor ht = param(4, 3, rng), ht2 = param(4, 3, rng);
                  AugmentationMerger m = AugmentationMerger::create(3, rng);
                  std::vector<Tensor> params = m.parameters();
                  params.push_back(ht);
                  params.push_back(ht2);
                  return Instance{params, weighted_sum([=] { return merge_augmentations(ht, ht2, m).merged; }, rng)};
                }),
      make_case("label_attention", [](Rng& rng) { return aggregation_instance(rng, AggregationMode::attention); }),
      make_case("label_mlp_aggregation", [](Rng& rng) { return aggregation_instance(rng, AggregationMode::mlp); }),
      make_case("label_average", [](Rng& rng) { return aggregation_instance(rng, AggregationMode::average); }),
      make_case("projection",
                [](Rng& rng) {
                  Tensor h = param(4, 3, rng);
                  ProjectionHead p = ProjectionHead::create(3, rng);
                  std::vector<Tensor> params = p.parameters();
                  params.push_back(h);
                  return Instance{params, weighted_sum([=] { return project(h, p); }, rng)};
                }),
      make_case("prediction_head",
                [](Rng& rng) {
                  const BipartiteGraph g = random_graph(4, 3, 7, LabelMode::multi, rng);
                  Tensor zu = param(4, 3, rng), zi = param(3, 3, rng);
                  PredictionHead head = PredictionHead::create(3, 3, rng);
                  std::vector<Tensor> params = head.parameters();
                  params.push_back(zu);
                  params.push_back(zi);
                  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
                  return Instance{params, weighted_sum([=] { return predict_edges(zu, zi, edges, head); }, rng)};
                }),
      make_case("main_loss",
                [](Rng& rng) {
                  const BipartiteGraph g = random_graph(4, 3, 7, LabelMode::multi, rng);
                  Tensor zu = param(4, 3, rng), zi = param(3, 3, rng);
                  PredictionHead head = PredictionHead::create(3, 3, rng);
                  std::vector<Tensor> params = head.parameters();
                  params.push_back(zu);
                  params.push_back(zi);
                  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
                  const Matrix y = one_hot(edges, LabelMode::multi);
                  const double eta = rng.uniform(0.01, 1.0);
                  return Instance{params, [=] { return main_loss(predict_edges(zu, zi, edges, head), y, zu, zi, eta); }};
                }),
      make_case("subtask_loss",
                [](Rng& rng) {
                  const BipartiteGraph g = random_graph(4, 3, 5, LabelMode::multi, rng);
                  Tensor zu = param(4, 3, rng), zi = param(3, 3, rng);
                  Tensor mu = Tensor::constant(random_matrix(4, 3, rng)), mi = Tensor::constant(random_matrix(3, 3, rng));
                  PredictionHead head = PredictionHead::create(3, 3, rng);
                  std::vector<Tensor> params = head.parameters();
                  params.push_back(zu);
                  params.push_back(zi);
                  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
                  const Matrix y = one_hot(edges, LabelMode::multi);
                  std::vector<std::uint8_t> m1(4, 0), m2(3, 0);
                  for (const Edge& e : edges) m1[e.user] = m2[e.item] = 1;
                  return Instance{params, [=] {
                                    return subtask_loss(predict_edges(zu, zi, edges, head), y, zu, zi, mu, mi, m1, m2);
                                  }};
                }),
      make_case("total_loss",
                [](Rng& rng) {
                  std::vector<Tensor> parts;
                  for (int k = 0; k < 7; ++k) parts.push_back(param(1, 1, rng, 0.0, 3.0));
                  const LossWeights w{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                                      rng.uniform(0.0, 1.0)};
                  return Instance{parts, [parts, w] {
                                    return total_loss(LossTerms{parts[0], parts[1], parts[2], parts[3], parts[4],
                                                                parts[5], parts[6]},
                                                      w);
                                  }};
                }),
      make_case("fusion",
                [](Rng& rng) {
                  Tensor zm = param(5, 3, rng), zs = param(5, 3, rng);
                  RoleFusion f = RoleFusion::create(3, rng);
                  std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
                  const std::vector<std::size_t> rows = masked_rows(mask);
                  std::vector<Tensor> params = f.parameters();
                  params.push_back(zm);
                  params.push_back(zs);
                  return Instance{params, weighted_sum(
                                              [=] {
                                                Tensor w = fusion_weights(ops::gather_rows(zs, rows),
                                                                          ops::gather_rows(zm, rows), f);
                                                return fuse(zm, zs, mask, w);
                                              },
                                              rng)};
                }),
      make_case("label_pipeline_softmax_attention",
                [](Rng& rng) { return pipeline_instance(rng, Activation::softmax, AggregationMode::attention); }),
      make_case("label_pipeline_relu_mlp",
                [](Rng& rng) { return pipeline_instance(rng, Activation::relu, AggregationMode::mlp); }),
  };
}

}  // namespace mcgcl::testing
