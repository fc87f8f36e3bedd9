#include "mcgcl/framework.hpp"

#include <cmath>

#include "mcgcl/diagnostics.hpp"
#include "mcgcl/errors.hpp"
#include "mcgcl/init.hpp"
#include "mcgcl/pipeline.hpp"

namespace mcgcl {

PipelineOptions pipeline_options(const TrainConfig& config) {
  PipelineOptions o;
  o.dim = config.dim;
  o.layers = config.layers;
  o.activation = config.activation;
  o.aggregation = config.aggregation;
  o.temperature = config.temperature;
  o.cross_sign = config.cross_loss_sign;
  return o;
}

AdamOptions adam_options(const TrainConfig& config) {
  return {config.learning_rate, config.weight_decay, config.beta1, config.beta2, config.adam_epsilon};
}

SubtaskOptions subtask_options(const TrainConfig& config, std::uint64_t seed) {
  SubtaskOptions o;
  o.pipeline = pipeline_options(config);
  o.mode = config.label_mode;
  o.k_top = config.k_top;
  o.p_remove = config.p_remove;
  o.p_add = config.p_add;
  o.epochs = config.epochs_subtask;
  o.mu = config.mu;
  o.gamma = config.gamma;
  o.adam = adam_options(config);
  o.seed = seed;
  return o;
}

namespace {

ViewSet views_of(const BipartiteGraph& graph) {
  ViewSet set;
  for (auto& [label, sub] : partition_by_label(graph)) set.views.push_back(make_view(label, sub));
  return set;
}

template <typename F>
auto guarded(const char* stage, std::size_t epoch, F&& body) {
  try {
    return body();
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError(stage, epoch, e.what());
  }
}

Metrics score(const Tensor& z_user, const Tensor& z_item, const PredictionHead& head, const BipartiteGraph& edges) {
  Tensor probs = predict_edges(z_user, z_item, edges.edges(), head);
  return evaluate(probs.value(), class_indices(edges.edges(), edges.mode()));
}

PredictionHead frozen_copy(const PredictionHead& h) {
  return {Tensor::constant(h.w1.value()), Tensor::constant(h.b1.value()), Tensor::constant(h.w2.value()),
          Tensor::constant(h.b2.value())};
}

PredictionHead trainable_copy(const PredictionHead& h) {
  return {Tensor::parameter(h.w1.value()), Tensor::parameter(h.b1.value()), Tensor::parameter(h.w2.value()),
          Tensor::parameter(h.b2.value())};
}

}  // namespace

MainTaskResult run_main_task(const BipartiteGraph& train, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  Rng init = Rng::derive(seed, "init.main");
  Rng aug = Rng::derive(seed, "augment.main");
  const BipartiteGraph g_t = augment(train, AugmentKind::remove, config.p_remove, aug);
  const BipartiteGraph g_t2 = augment(train, AugmentKind::add, config.p_add, aug);
  const ViewSet view_t = views_of(g_t);
  const ViewSet view_t2 = views_of(g_t2);
  const auto labels = labels_of(config.label_mode);

  std::vector<Tensor> h0;
  const std::size_t tables = config.per_label_h0 ? labels.size() : 1;
  for (std::size_t k = 0; k < tables; ++k) h0.push_back(xavier_parameter(train.node_count(), config.dim, init));
  const LabelPipeline pipeline = LabelPipeline::create(labels, 2, pipeline_options(config), init);
  const PredictionHead head = PredictionHead::create(config.dim, labels.size(), init);

  std::vector<Tensor> params = h0;
  for (auto& more : {pipeline.parameters(), head.parameters()}) params.insert(params.end(), more.begin(), more.end());

  const Matrix y = one_hot(train.edges(), train.mode());
  AdamState adam(adam_options(config));
  MainTaskResult result;

  for (std::size_t epoch = 0; epoch < config.epochs_main; ++epoch) {
    result.epochs.push_back(guarded("main", epoch + 1, [&] {
      Tape tape;
      Recording recording(tape);
      auto out = pipeline.forward(h0, view_t, view_t2, train.user_count());
      Tensor probs = predict_edges(out.aggregated[0], out.aggregated[1], train.edges(), head);
      Tensor lm = main_loss(probs, y, out.aggregated[0], out.aggregated[1], config.eta);
      Tensor objective = ops::add(ops::scale(ops::add(out.same_loss, out.cross_loss), config.alpha),
                                  ops::scale(lm, config.beta));
      backward(tape, objective);
      adam_step(adam, params);
      return MainTaskLosses{out.same_loss.item(), out.cross_loss.item(), lm.item(), objective.item()};
    }));
  }

  SimilarityCounter counter;
  auto out = guarded("main", config.epochs_main, [&] { return pipeline.forward(h0, view_t, view_t2, train.user_count()); });
  result.similarity_evaluations_per_epoch = counter.count();
  result.z_user = out.aggregated[0].value();
  result.z_item = out.aggregated[1].value();
  result.head = frozen_copy(head);
  result.train_probs = predict_edges(out.aggregated[0], out.aggregated[1], train.edges(), head).value();
  return result;
}

RoleFusion RoleFusion::create(std::size_t dim, Rng& rng) {
  RoleFusion f;
  f.w = xavier_parameter(dim, dim, rng);
  f.b = zeros_parameter(1, dim);
  f.q_s = xavier_parameter(dim, 1, rng);
  f.q_m = xavier_parameter(dim, 1, rng);
  return f;
}

Tensor fusion_weights(const Tensor& zs_rows, const Tensor& zm_rows, const RoleFusion& fusion) {
  auto score = [&](const Tensor& z, const Tensor& q) {
    return ops::matmul(ops::mean_rows(ops::tanh(ops::add(ops::matmul(z, fusion.w), fusion.b))), q);
  };
  return ops::row_softmax(ops::concat_columns({score(zs_rows, fusion.q_s), score(zm_rows, fusion.q_m)}));
}

Tensor fuse(const Tensor& z_m, const Tensor& z_s, std::span<const std::uint8_t> mask, const Tensor& weights) {
  if (z_m.rows() != z_s.rows() || z_m.cols() != z_s.cols() || mask.size() != z_m.rows()) {
    throw DimensionError("fuse: " + shape_string(z_m.rows(), z_m.cols()) + " vs " +
                         shape_string(z_s.rows(), z_s.cols()) + " with mask of length " + std::to_string(mask.size()));
  }
  if (weights.rows() != 1 || weights.cols() != 2) throw DimensionError("fuse: weights must be 1x2");
  Matrix m(mask.size(), 1), keep(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    m(i, 0) = mask[i] ? 1.0 : 0.0;
    keep(i, 0) = mask[i] ? 0.0 : 1.0;
  }
  Tensor blended = ops::add(ops::multiply(z_s, ops::column(weights, 0)), ops::multiply(z_m, ops::column(weights, 1)));
  return ops::add(ops::multiply(z_m, Tensor::constant(std::move(keep))),
                  ops::multiply(blended, Tensor::constant(std::move(m))));
}

Tensor total_loss(const LossTerms& t, const LossWeights& w) {
  Tensor main = ops::add(ops::scale(ops::add(t.main_same, t.main_cross), w.alpha), ops::scale(t.main, w.beta));
  Tensor sub = ops::add(ops::scale(ops::add(t.sub_same, t.sub_cross), w.mu), ops::scale(t.sub, w.gamma));
  return ops::add(ops::add(main, sub), t.validation);
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"main contrastive (same encoder)", c.main_same}, {"main contrastive (cross encoder)", c.main_cross},
      {"main prediction", c.main},                      {"subtask contrastive (same encoder)", c.sub_same},
      {"subtask contrastive (cross encoder)", c.sub_cross}, {"subtask", c.sub},
      {"validation", c.validation}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) throw DivergenceError(name, 0, "non-finite loss component");
  }
  return w.alpha * (c.main_same + c.main_cross) + w.beta * c.main + w.mu * (c.sub_same + c.sub_cross) +
         w.gamma * c.sub + c.validation;
}

FrameworkResult run_framework(const BipartiteGraph& graph, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (graph.mode() != config.label_mode) throw ConfigError("label_mode does not match the data's label mode");
  FrameworkResult r;
  r.seed = seed;
  r.variant = config.variant;
  const SplitGraphs parts = split(graph, seed);
  const BipartiteGraph& train = parts.train;
  r.train_edges = train.edge_count();
  r.validation_edges = parts.validation.edge_count();
  r.test_edges = parts.test.edge_count();
  const LossWeights weights{config.alpha, config.beta, config.mu, config.gamma};

  Matrix zm_user, zm_item, train_probs;
  PredictionHead head;
  if (config.variant == Variant::without_main_task) {
    Rng init = Rng::derive(seed, "init.main");
    zm_user = xavier_uniform(train.user_count(), config.dim, init);
    zm_item = xavier_uniform(train.item_count(), config.dim, init);
    head = frozen_copy(PredictionHead::create(config.dim, label_count(config.label_mode), init));
    train_probs =
        predict_edges(Tensor::constant(zm_user), Tensor::constant(zm_item), train.edges(), head).value();
  } else {
    MainTaskResult main = run_main_task(train, config, seed);
    zm_user = std::move(main.z_user);
    zm_item = std::move(main.z_item);
    head = main.head;
    train_probs = std::move(main.train_probs);
    r.main_epochs = std::move(main.epochs);
    r.main_similarity_per_epoch = main.similarity_evaluations_per_epoch;
    if (!r.main_epochs.empty()) {
      r.components.main_same = r.main_epochs.back().contrastive_same;
      r.components.main_cross = r.main_epochs.back().contrastive_cross;
      r.components.main = r.main_epochs.back().main;
    }
  }
  const Tensor zm_u = Tensor::constant(zm_user);
  const Tensor zm_i = Tensor::constant(zm_item);

  const auto finish = [&](const Tensor& z_user, const Tensor& z_item, const PredictionHead& h) {
    r.z_user = z_user.value();
    r.z_item = z_item.value();
    r.head = frozen_copy(h);
    r.test = score(z_user, z_item, h, parts.test);
    r.total = total_loss(r.components, weights);
    return r;
  };

  if (config.variant != Variant::without_main_task) r.after_main = score(zm_u, zm_i, head, parts.test);
  if (config.variant == Variant::without_subtask) return finish(zm_u, zm_i, head);

  const auto entropy = edge_entropy(train_probs, one_hot(train.edges(), train.mode()));
  const HardSampleSet hard =
      select_hard(entropy, train.edges(), config.epsilon, train.user_count(), train.item_count());
  r.hard_edges = hard.size();
  r.hard = hard;
  SubtaskResult sub = run_subtask(hard, zm_user, zm_item, subtask_options(config, seed));
  r.subtask_epochs = sub.epochs;
  r.subtask_similarity_per_epoch = sub.similarity_evaluations_per_epoch;
  r.masked_users = sub.masked_users;
  r.masked_items = sub.masked_items;
  if (!sub.epochs.empty()) {
    r.components.sub_same = sub.epochs.back().contrastive_same;
    r.components.sub_cross = sub.epochs.back().contrastive_cross;
    r.components.sub = sub.epochs.back().subtask;
  }
  const Tensor zs_u = Tensor::constant(sub.z_user);
  const Tensor zs_i = Tensor::constant(sub.z_item);

  const Tensor even = Tensor::constant(Matrix{{0.5, 0.5}});
  Tensor fixed_user = fuse(zm_u, zs_u, hard.user_mask, even);
  Tensor fixed_item = fuse(zm_i, zs_i, hard.item_mask, even);
  r.after_subtask = score(fixed_user, fixed_item, head, parts.test);
  if (config.variant == Variant::without_validation) return finish(fixed_user, fixed_item, head);

  // Validation stage: only the fusion scorers and the prediction head move.
  Rng init = Rng::derive(seed, "init.validation");
  const RoleFusion user_fusion = RoleFusion::create(config.dim, init);
  const RoleFusion item_fusion = RoleFusion::create(config.dim, init);
  const PredictionHead vhead = trainable_copy(head);
  const auto user_rows = masked_rows(hard.user_mask);
  const auto item_rows = masked_rows(hard.item_mask);

  std::vector<Tensor> params = vhead.parameters();
  for (const auto& [rows, f] : {std::pair{&user_rows, &user_fusion}, std::pair{&item_rows, &item_fusion}}) {
    if (rows->empty()) continue;
    auto more = f->parameters();
    params.insert(params.end(), more.begin(), more.end());
  }

  const auto fused = [&](const Tensor& zm, const Tensor& zs, const std::vector<std::size_t>& rows,
                         std::span<const std::uint8_t> mask, const RoleFusion& f) {
    Tensor w = rows.empty() ? even : fusion_weights(ops::gather_rows(zs, rows), ops::gather_rows(zm, rows), f);
    return std::pair{fuse(zm, zs, mask, w), w};
  };

  const auto& val_edges = parts.validation.edges();
  const Matrix y_val = one_hot(val_edges, parts.validation.mode());
  std::size_t epochs = config.epochs_validation;
  if (val_edges.empty() && epochs > 0) {
    warn("validation split is empty; validation stage skipped");
    epochs = 0;
  }
  AdamState adam(adam_options(config));
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    r.validation_epochs.push_back(guarded("validation", epoch + 1, [&] {
      Tape tape;
      Recording recording(tape);
      auto [zu, wu] = fused(zm_u, zs_u, user_rows, hard.user_mask, user_fusion);
      auto [zi, wi] = fused(zm_i, zs_i, item_rows, hard.item_mask, item_fusion);
      Tensor lv = cross_entropy(predict_edges(zu, zi, val_edges, vhead), y_val);
      backward(tape, lv);
      adam_step(adam, params);
      return lv.item();
    }));
  }
  if (!r.validation_epochs.empty()) r.components.validation = r.validation_epochs.back();

  auto [zu, wu] = fused(zm_u, zs_u, user_rows, hard.user_mask, user_fusion);
  auto [zi, wi] = fused(zm_i, zs_i, item_rows, hard.item_mask, item_fusion);
  r.user_fusion = {wu.value()(0, 0), wu.value()(0, 1)};
  r.item_fusion = {wi.value()(0, 0), wi.value()(0, 1)};
  return finish(zu, zi, vhead);
}

}  // namespace mcgcl
