#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcgcl/config.hpp"
#include "mcgcl/graph.hpp"
#include "mcgcl/link_prediction.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/subtask.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

PipelineOptions pipeline_options(const TrainConfig& config);
AdamOptions adam_options(const TrainConfig& config);
SubtaskOptions subtask_options(const TrainConfig& config, std::uint64_t seed);

struct MainTaskLosses {
  double contrastive_same = 0.0;   // L_Mp
  double contrastive_cross = 0.0;  // L_Mc
  double main = 0.0;               // L_M
  double objective = 0.0;          // alpha (L_Mp + L_Mc) + beta L_M
};

struct MainTaskResult {
  Matrix z_user;
  Matrix z_item;
  PredictionHead head;
  Matrix train_probs;
  std::vector<MainTaskLosses> epochs;
  std::uint64_t similarity_evaluations_per_epoch = 0;
};

// Augments the training graph once into a removal view and an addition view,
// then trains encoders, mergers, projections, label aggregation and the
// prediction head for config.epochs_main epochs.
MainTaskResult run_main_task(const BipartiteGraph& train, const TrainConfig& config, std::uint64_t seed);

// Scores the masked rows of each source and normalizes the two scores.
struct RoleFusion {
  Tensor w;    // d x d
  Tensor b;    // 1 x d
  Tensor q_s;  // d x 1
  Tensor q_m;  // d x 1

  static RoleFusion create(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const { return {w, b, q_s, q_m}; }
};

// 1 x 2 distribution (W^S, W^M) from the masked rows of both sources.
Tensor fusion_weights(const Tensor& zs_rows, const Tensor& zm_rows, const RoleFusion& fusion);

// Masked rows: W^S z_s + W^M z_m. Other rows: z_m unchanged.
Tensor fuse(const Tensor& z_m, const Tensor& z_s, std::span<const std::uint8_t> mask, const Tensor& weights);

struct LossTerms {
  Tensor main_same, main_cross, main;
  Tensor sub_same, sub_cross, sub;
  Tensor validation;
};

struct LossWeights {
  double alpha = 0.6;
  double beta = 0.8;
  double mu = 0.6;
  double gamma = 0.7;
};

// alpha (L_Mp + L_Mc) + beta L_M + mu (L_Sp + L_Sc) + gamma L_S + L_v
Tensor total_loss(const LossTerms& terms, const LossWeights& weights);

struct LossComponents {
  double main_same = 0.0;
  double main_cross = 0.0;
  double main = 0.0;
  double sub_same = 0.0;
  double sub_cross = 0.0;
  double sub = 0.0;
  double validation = 0.0;
};

// Throws DivergenceError naming the first non-finite component.
double total_loss(const LossComponents& c, const LossWeights& weights);

struct FrameworkResult {
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  Matrix z_user;
  Matrix z_item;
  PredictionHead head;
  Metrics test;
  // Metrics of the pipeline stopped after the main task and after the subtask.
  std::optional<Metrics> after_main;
  std::optional<Metrics> after_subtask;
  std::vector<MainTaskLosses> main_epochs;
  std::vector<SubtaskLosses> subtask_epochs;
  std::vector<double> validation_epochs;
  LossComponents components;
  double total = 0.0;
  std::uint64_t main_similarity_per_epoch = 0;
  std::uint64_t subtask_similarity_per_epoch = 0;
  std::size_t train_edges = 0;
  std::size_t validation_edges = 0;
  std::size_t test_edges = 0;
  std::size_t hard_edges = 0;
  HardSampleSet hard;
  std::size_t masked_users = 0;
  std::size_t masked_items = 0;
  std::array<double, 2> user_fusion{0.5, 0.5};
  std::array<double, 2> item_fusion{0.5, 0.5};
};

// split -> main task -> hard mining -> subtask -> validation stage -> test metrics,
// truncated according to config.variant.
FrameworkResult run_framework(const BipartiteGraph& graph, const TrainConfig& config, std::uint64_t seed);

}  // namespace mcgcl
