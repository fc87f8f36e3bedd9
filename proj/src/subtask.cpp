#include "mcgcl/subtask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"

namespace mcgcl {

std::vector<double> edge_entropy(const Matrix& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
    throw DimensionError("edge_entropy: probabilities " + shape_string(probs.rows(), probs.cols()) + " vs labels " +
                         shape_string(labels.rows(), labels.cols()));
  }
  constexpr double lo = 1e-30, hi = 1.0 - 1e-30;
  std::vector<double> h(probs.rows(), 0.0);
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double p = std::clamp(probs(n, c), lo, hi);
      const double y = labels(n, c);
      if (y != 0.0) h[n] -= y * std::log(p);
      if (y != 1.0) h[n] -= (1.0 - y) * std::log(1.0 - p);
    }
  }
  return h;
}

std::size_t hard_count(std::size_t n, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in (0, 1]");
  if (n == 0) return 0;
  // The small offset keeps products such as 0.3 * 10 from rounding up past an integer.
  const double k = std::ceil(epsilon * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, n);
}

void HardSampleSet::write_tsv(std::ostream& out) const {
  out << "edge\tuser\titem\tlabel\tentropy\n";
  for (std::size_t k = 0; k < edges.size(); ++k) {
    out << indices[k] << '\t' << edges[k].user << '\t' << edges[k].item << '\t' << label_name(edges[k].label) << '\t'
        << entropy[k] << '\n';
  }
}

HardSampleSet select_hard(std::span<const double> entropies, std::span<const Edge> edges, double epsilon,
                          std::size_t users, std::size_t items) {
  if (entropies.size() != edges.size()) throw DimensionError("select_hard: entropy and edge counts differ");
  const std::size_t k = hard_count(edges.size(), epsilon);
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  HardSampleSet set;
  set.user_mask.assign(users, 0);
  set.item_mask.assign(items, 0);
  for (std::size_t r = 0; r < k; ++r) {
    const auto& e = edges[order[r]];
    if (e.user >= users || e.item >= items) throw ContractError("select_hard: edge endpoint out of range");
    set.indices.push_back(order[r]);
    set.edges.push_back(e);
    set.entropy.push_back(entropies[order[r]]);
    set.user_mask[e.user] = 1;
    set.item_mask[e.item] = 1;
  }
  return set;
}

Tensor mask_extract(const Tensor& z, std::span<const std::uint8_t> mask) {
  if (mask.size() != z.rows()) {
    throw DimensionError("mask_extract: mask of length " + std::to_string(mask.size()) + " for " +
                         shape_string(z.rows(), z.cols()));
  }
  Matrix m(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) m(i, 0) = mask[i] ? 1.0 : 0.0;
  return ops::multiply(z, Tensor::constant(std::move(m)));
}

std::vector<std::size_t> masked_rows(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(i);
  return rows;
}

HomogeneousGraph build_homogeneous_graph(const Matrix& h, std::size_t k_top, const ProjectionHead& mlp, LabelMode mode,
                                         Side side) {
  const std::size_t n = h.rows();
  if (n < 2) throw ContractError("build_homogeneous_graph: needs at least two nodes, got " + std::to_string(n));
  Matrix p = project(Tensor::constant(h), mlp).value();
  Tensor pt = Tensor::constant(p);
  Matrix s = ops::row_softmax(ops::matmul(pt, ops::transpose(pt))).value();

  HomogeneousGraph g;
  g.nodes = n;
  g.side = side;
  g.mode = mode;
  const std::size_t k = std::min(k_top, n - 1);
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::uint32_t j = 0; j < n; ++j)
      if (j != i) candidates.push_back(j);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return s(i, a) > s(i, b); });
    for (std::size_t r = 0; r < k; ++r) g.arcs.push_back({i, candidates[r], s(i, candidates[r]), EdgeLabel::Low});
  }

  std::vector<std::size_t> rank(g.arcs.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return g.arcs[a].score > g.arcs[b].score; });
  const std::size_t total = g.arcs.size();
  for (std::size_t r = 0; r < total; ++r) {
    auto& arc = g.arcs[rank[r]];
    if (mode == LabelMode::binary) {
      arc.label = 2 * r < total ? EdgeLabel::High : EdgeLabel::Low;
    } else {
      arc.label = 3 * r < total ? EdgeLabel::High : (3 * r < 2 * total ? EdgeLabel::Mid : EdgeLabel::Low);
    }
  }
  return g;
}

HomogeneousGraph augment(const HomogeneousGraph& graph, AugmentKind kind, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 0.5)) throw ConfigError("augmentation probability must be in [0, 0.5], got " + std::to_string(p));
  HomogeneousGraph out = graph;
  if (kind == AugmentKind::remove) {
    out.arcs.clear();
    for (const auto& a : graph.arcs)
      if (!rng.bernoulli(p)) out.arcs.push_back(a);
    return out;
  }
  const std::size_t n = graph.nodes;
  const auto key = [n](std::size_t a, std::size_t b) { return a * n + b; };
  std::unordered_set<std::size_t> taken;
  for (const auto& a : graph.arcs) taken.insert(key(a.from, a.to));
  const std::size_t capacity = n * (n - 1) - std::min(n * (n - 1), taken.size());
  std::size_t wanted = static_cast<std::size_t>(std::floor(p * static_cast<double>(graph.arcs.size())));
  wanted = std::min(wanted, capacity);
  const auto draw_label = [&] { return graph.arcs[rng.below(graph.arcs.size())].label; };
  if (wanted > 0 && capacity <= 4 * wanted) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> free;
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = 0; b < n; ++b)
        if (a != b && !taken.contains(key(a, b))) free.emplace_back(a, b);
    for (std::size_t k = 0; k < wanted; ++k) {
      std::swap(free[k], free[k + rng.below(free.size() - k)]);
      out.arcs.push_back({free[k].first, free[k].second, 0.0, draw_label()});
    }
    return out;
  }
  while (wanted > 0) {
    auto a = static_cast<std::uint32_t>(rng.below(n));
    auto b = static_cast<std::uint32_t>(rng.below(n));
    if (a == b || !taken.insert(key(a, b)).second) continue;
    out.arcs.push_back({a, b, 0.0, draw_label()});
    --wanted;
  }
  return out;
}

ViewSet label_views(const HomogeneousGraph& graph) {
  ViewSet set;
  for (auto label : labels_of(graph.mode)) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& a : graph.arcs)
      if (a.label == label) pairs.emplace_back(a.from, a.to);
    set.views.push_back({label, Tensor::sparse(normalize_symmetric(graph.nodes, pairs))});
  }
  return set;
}

Tensor subtask_loss(const Tensor& probs, const Matrix& labels, const Tensor& zs_user, const Tensor& zs_item,
                    const Tensor& zm_user, const Tensor& zm_item, std::span<const std::uint8_t> user_mask,
                    std::span<const std::uint8_t> item_mask) {
  Tensor reg_u = ops::squared_l2(ops::subtract(mask_extract(zm_user, user_mask), zs_user));
  Tensor reg_i = ops::squared_l2(ops::subtract(mask_extract(zm_item, item_mask), zs_item));
  return ops::add(cross_entropy(probs, labels), ops::add(reg_u, reg_i));
}

namespace {

struct SideModel {
  bool active = false;
  std::vector<std::size_t> rows;
  Tensor h0;
  Tensor w_out;
  LabelPipeline pipeline;
  ViewSet view_t, view_t2;
  HomogeneousGraph graph;
};

struct SubtaskForward {
  Tensor same = Tensor::scalar(0.0);
  Tensor cross = Tensor::scalar(0.0);
  Tensor zs_user, zs_item;  // full shape
};

SubtaskForward forward(const SideModel& users, const SideModel& items, std::size_t n_users, std::size_t n_items) {
  SubtaskForward f;
  const auto side_output = [&f](const SideModel& s, std::size_t n) {
    Tensor compact = s.h0;
    if (s.active) {
      const Tensor h0[] = {s.h0};
      auto out = s.pipeline.forward(h0, s.view_t, s.view_t2, s.rows.size());
      f.same = ops::add(f.same, out.same_loss);
      f.cross = ops::add(f.cross, out.cross_loss);
      compact = ops::add(s.h0, ops::matmul(out.aggregated[0], s.w_out));
    }
    return ops::scatter_rows(compact, s.rows, n);
  };
  f.zs_user = side_output(users, n_users);
  f.zs_item = side_output(items, n_items);
  return f;
}

}  // namespace

SubtaskResult run_subtask(const HardSampleSet& hard, const Matrix& zm_user, const Matrix& zm_item,
                          const SubtaskOptions& options) {
  if (hard.user_mask.size() != zm_user.rows() || hard.item_mask.size() != zm_item.rows()) {
    throw DimensionError("run_subtask: mask lengths do not match embedding rows");
  }
  const std::size_t d = zm_user.cols();
  if (options.pipeline.dim != d) throw DimensionError("run_subtask: embedding width differs from configured dim");
  Rng init = Rng::derive(options.seed, "init.subtask");
  Rng aug = Rng::derive(options.seed, "augment.subtask");
  const auto labels = labels_of(options.mode);

  SubtaskResult result;
  const auto build_side = [&](const Matrix& zm, std::span<const std::uint8_t> mask, Side side) {
    SideModel s;
    s.rows = masked_rows(mask);
    Matrix compact = ops::gather_rows(Tensor::constant(zm), s.rows).value();
    if (s.rows.size() < 2) {
      warn(std::string("subtask: fewer than two masked ") + (side == Side::users ? "users" : "items") +
           "; that side keeps its masked main-task representations");
      s.h0 = Tensor::constant(std::move(compact));
      return s;
    }
    s.active = true;
    ProjectionHead mlp = ProjectionHead::create(d, init);
    s.graph = build_homogeneous_graph(compact, options.k_top, mlp, options.mode, side);
    s.view_t = label_views(augment(s.graph, AugmentKind::remove, options.p_remove, aug));
    s.view_t2 = label_views(augment(s.graph, AugmentKind::add, options.p_add, aug));
    s.pipeline = LabelPipeline::create(labels, 1, options.pipeline, init);
    s.h0 = Tensor::parameter(std::move(compact));
    s.w_out = Tensor::parameter(Matrix(d, d));
    return s;
  };
  SideModel users = build_side(zm_user, hard.user_mask, Side::users);
  SideModel items = build_side(zm_item, hard.item_mask, Side::items);
  PredictionHead head = PredictionHead::create(d, label_count(options.mode), init);

  std::vector<Tensor> params = head.parameters();
  for (const SideModel* s : {&users, &items}) {
    if (!s->active) continue;
    params.push_back(s->h0);
    params.push_back(s->w_out);
    auto more = s->pipeline.parameters();
    params.insert(params.end(), more.begin(), more.end());
  }

  const Tensor zm_u = Tensor::constant(zm_user);
  const Tensor zm_i = Tensor::constant(zm_item);
  const Matrix y = one_hot(hard.edges, options.mode);
  AdamState adam(options.adam);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    try {
      Tape tape;
      Recording recording(tape);
      SubtaskForward f = forward(users, items, zm_user.rows(), zm_item.rows());
      Tensor probs = predict_edges(f.zs_user, f.zs_item, hard.edges, head);
      Tensor ls = subtask_loss(probs, y, f.zs_user, f.zs_item, zm_u, zm_i, hard.user_mask, hard.item_mask);
      Tensor objective = ops::add(ops::scale(ops::add(f.same, f.cross), options.mu), ops::scale(ls, options.gamma));
      backward(tape, objective);
      adam_step(adam, params);
      result.epochs.push_back({f.same.item(), f.cross.item(), ls.item(), objective.item()});
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError("subtask", epoch + 1, e.what());
    }
  }

  SimilarityCounter counter;
  SubtaskForward final_pass = forward(users, items, zm_user.rows(), zm_item.rows());
  result.similarity_evaluations_per_epoch = counter.count();
  result.z_user = final_pass.zs_user.value();
  result.z_item = final_pass.zs_item.value();
  result.masked_users = users.rows.size();
  result.masked_items = items.rows.size();
  result.user_side_trained = users.active;
  result.item_side_trained = items.active;
  result.user_graph = std::move(users.graph);
  result.item_graph = std::move(items.graph);
  return result;
}

}  // namespace mcgcl
