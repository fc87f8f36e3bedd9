#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcgcl/aggregation.hpp"
#include "mcgcl/contrastive.hpp"
#include "mcgcl/encoder.hpp"
#include "mcgcl/graph.hpp"
#include "mcgcl/rng.hpp"
#include "mcgcl/tensor.hpp"

namespace mcgcl {

struct PipelineOptions {
  std::size_t dim = 32;
  std::size_t layers = 2;
  Activation activation = Activation::softmax;
  AggregationMode aggregation = AggregationMode::attention;
  double temperature = 1.0;
  CrossLossSign cross_sign = CrossLossSign::paper;
};

// One graph view per label, in labels_of(mode) order.
struct ViewSet {
  std::vector<LabelView> views;
};

// Encoders, augmentation mergers, projection heads and label aggregation for
// a node set of one role (homogeneous graphs) or two (users then items).
class LabelPipeline {
 public:
  struct Output {
    Tensor same_loss;                  // summed over labels
    Tensor cross_loss;                 // summed over ordered label pairs
    std::vector<Tensor> aggregated;    // one per role
    std::vector<Tensor> merged_beta;   // per label and role, 1 x 2
  };

  static LabelPipeline create(std::span<const EdgeLabel> labels, std::size_t roles, const PipelineOptions& options,
                              Rng& rng);

  // h0 holds one matrix shared by all labels, or one per label. `users` is
  // the row where the second role starts (equal to the row count for one role).
  Output forward(std::span<const Tensor> h0, const ViewSet& view_t, const ViewSet& view_t2, std::size_t users) const;

  std::vector<Tensor> parameters() const;
  const std::vector<EdgeLabel>& labels() const { return labels_; }

 private:
  PipelineOptions options_;
  std::vector<EdgeLabel> labels_;
  std::size_t roles_ = 2;
  std::vector<GcnEncoder> encoders_;                     // per label
  std::vector<std::vector<AugmentationMerger>> mergers_;  // [label][role]
  std::vector<ProjectionHead> projections_;              // per label
  std::vector<LabelAggregator> aggregators_;              // per role
};

}  // namespace mcgcl
