#include "mcgcl/pipeline.hpp"

#include <map>

#include "mcgcl/errors.hpp"

namespace mcgcl {

LabelPipeline LabelPipeline::create(std::span<const EdgeLabel> labels, std::size_t roles,
                                    const PipelineOptions& options, Rng& rng) {
  if (roles != 1 && roles != 2) throw ContractError("LabelPipeline: roles must be 1 or 2");
  LabelPipeline p;
  p.options_ = options;
  p.labels_.assign(labels.begin(), labels.end());
  p.roles_ = roles;
  for (auto label : labels) {
    p.encoders_.push_back(GcnEncoder::create(label, options.dim, options.layers, options.activation, rng));
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::vector<AugmentationMerger> per_role;
    for (std::size_t r = 0; r < roles; ++r) per_role.push_back(AugmentationMerger::create(options.dim, rng));
    p.mergers_.push_back(std::move(per_role));
  }
  for (std::size_t l = 0; l < labels.size(); ++l) p.projections_.push_back(ProjectionHead::create(options.dim, rng));
  for (std::size_t r = 0; r < roles; ++r) {
    p.aggregators_.push_back(LabelAggregator::create(options.aggregation, labels.size(), options.dim, rng));
  }
  return p;
}

LabelPipeline::Output LabelPipeline::forward(std::span<const Tensor> h0, const ViewSet& view_t, const ViewSet& view_t2,
                                             std::size_t users) const {
  const std::size_t L = labels_.size();
  if (h0.size() != 1 && h0.size() != L) throw ContractError("LabelPipeline: need one H0 or one per label");
  if (view_t.views.size() != L || view_t2.views.size() != L) throw ContractError("LabelPipeline: view count mismatch");

  const auto roles_of = [&](const Tensor& stacked, std::string tag) {
    if (roles_ == 2) return split_roles(stacked, users, std::move(tag));
    return NodeEmbeddings{stacked, Tensor::constant(Matrix(0, stacked.cols())), std::move(tag)};
  };

  Output out;
  std::map<EdgeLabel, Tensor> same;
  std::map<EdgeLabel, NodeEmbeddings> projected;
  std::vector<std::vector<Tensor>> merged(roles_);  // [role][label]
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& input = h0.size() == 1 ? h0[0] : h0[l];
    auto [ht, ht2] = encode_label_pair(encoders_[l], view_t.views[l], view_t2.views[l], input);
    const std::string tag(label_name(labels_[l]));
    NodeEmbeddings et = roles_of(ht, tag + ".t");
    NodeEmbeddings et2 = roles_of(ht2, tag + ".t2");
    same.emplace(labels_[l], same_encoder_loss(et, et2, options_.temperature));

    NodeEmbeddings z{Tensor(), Tensor::constant(Matrix(0, options_.dim)), tag};
    const Tensor* parts_t[2] = {&et.users, &et.items};
    const Tensor* parts_t2[2] = {&et2.users, &et2.items};
    for (std::size_t r = 0; r < roles_; ++r) {
      MergeResult m = merge_augmentations(*parts_t[r], *parts_t2[r], mergers_[l][r]);
      out.merged_beta.push_back(m.beta);
      merged[r].push_back(m.merged);
      Tensor projected_role = project(m.merged, projections_[l]);
      if (r == 0) {
        z.users = projected_role;
      } else {
        z.items = projected_role;
      }
    }
    projected.emplace(labels_[l], std::move(z));
  }
  out.same_loss = sum_augmentation_losses(same);
  out.cross_loss = cross_encoder_loss(projected, options_.temperature, options_.cross_sign);
  for (std::size_t r = 0; r < roles_; ++r) out.aggregated.push_back(aggregators_[r].apply(merged[r]));
  return out;
}

std::vector<Tensor> LabelPipeline::parameters() const {
  std::vector<Tensor> p;
  const auto append = [&p](const std::vector<Tensor>& more) { p.insert(p.end(), more.begin(), more.end()); };
  for (const auto& e : encoders_) append(e.parameters());
  for (const auto& per_role : mergers_)
    for (const auto& m : per_role) append(m.parameters());
  for (const auto& h : projections_) append(h.parameters());
  for (const auto& a : aggregators_) append(a.parameters());
  return p;
}

}  // namespace mcgcl
