#include "kgx/retrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgx/error.hpp"

namespace kgx {

Subgraph perturb(const Subgraph& extended, const Triple& fact, EntityId v) {
  if (v == fact.head || v == fact.tail)
    throw Error(ErrorCode::protected_entity,
                "cannot remove query endpoint " + std::to_string(v));
  if (!extended.contains(v))
    throw Error(ErrorCode::invalid_selection,
                "entity " + std::to_string(v) + " is not in the subgraph");
  Subgraph out;
  out.parent = extended.parent;
  out.role = SubgraphRole::perturbed;
  out.entities.reserve(extended.entities.size() - 1);
  for (EntityId u : extended.entities)
    if (u != v) out.entities.push_back(u);
  for (EdgeId e : extended.edges) {
    const auto& t = extended.parent->triple(e);
    if (t.head != v && t.tail != v) out.edges.push_back(e);
  }
  return out;
}

RetrainedModel::RetrainedModel(const EmbeddingModel& base,
                               const Subgraph& support,
                               const FrontierSet& frontier)
    : base_(&base) {
  for (EntityId v : support.entities)
    if (!frontier.contains(v)) trainable_ids_.push_back(v);
  const std::size_t w = base.entity_width();
  rows_.resize(trainable_ids_.size() * w);
  for (std::size_t i = 0; i < trainable_ids_.size(); ++i) {
    auto src = base.entity(trainable_ids_[i]);
    std::copy(src.begin(), src.end(), rows_.begin() + i * w);
  }
}

bool RetrainedModel::is_trainable(EntityId v) const {
  return std::binary_search(trainable_ids_.begin(), trainable_ids_.end(), v);
}

std::span<const double> RetrainedModel::entity(EntityId v) const {
  auto it = std::lower_bound(trainable_ids_.begin(), trainable_ids_.end(), v);
  if (it == trainable_ids_.end() || *it != v) return base_->entity(v);
  const std::size_t w = base_->entity_width();
  return std::span<const double>(rows_).subspan(
      static_cast<std::size_t>(it - trainable_ids_.begin()) * w, w);
}

std::span<double> RetrainedModel::mutable_row(EntityId v) {
  auto it = std::lower_bound(trainable_ids_.begin(), trainable_ids_.end(), v);
  if (it == trainable_ids_.end() || *it != v) return {};
  const std::size_t w = base_->entity_width();
  return std::span<double>(rows_).subspan(
      static_cast<std::size_t>(it - trainable_ids_.begin()) * w, w);
}

double RetrainedModel::score(const Triple& x) const {
  return kgx::score(base_->kind(), entity(x.head), relation(x.relation),
                    entity(x.tail));
}

RetrainedModel finetune(const EmbeddingModel& base, const Subgraph& support,
                        const FrontierSet& frontier, const RetrainConfig& cfg) {
  RetrainedModel m(base, support, frontier);
  if (support.edges.empty()) {
    m.no_triples = true;
    return m;
  }
  Rng rng(cfg.seed);
  const std::size_t w = base.entity_width();
  const double margin = base.margin();
  std::vector<double> grad_h(w), grad_t(w), grad_r(base.relation_width());
  std::vector<EdgeId> order(support.edges);

  // grad_r is computed and discarded: relations are frozen.
  auto step = [&](const Triple& x, double scale) {
    std::fill(grad_h.begin(), grad_h.end(), 0.0);
    std::fill(grad_t.begin(), grad_t.end(), 0.0);
    add_score_gradient(base.kind(), m.entity(x.head), m.relation(x.relation),
                       m.entity(x.tail), scale, grad_h, grad_r, grad_t);
    if (auto row = m.mutable_row(x.head); !row.empty())
      for (std::size_t i = 0; i < w; ++i) row[i] -= cfg.learning_rate * grad_h[i];
    if (auto row = m.mutable_row(x.tail); !row.empty())
      for (std::size_t i = 0; i < w; ++i) row[i] -= cfg.learning_rate * grad_t[i];
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (EdgeId e : order) {
      const Triple& pos = support.parent->triple(e);
      auto negs = negative_sample(support.entities, pos, cfg.negatives, rng,
                                  Corruption::head_or_tail);
      if (negs.empty()) continue;
      const double wgt = 1.0 / static_cast<double>(negs.size());
      for (const auto& neg : negs) {
        double loss = margin - m.score(pos) + m.score(neg);
        if (loss <= 0.0) continue;
        total += wgt * loss;
        step(pos, -wgt);
        step(neg, wgt);
      }
    }
    double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean))
      throw Error(ErrorCode::training_diverged,
                  "fine-tuning diverged at epoch " + std::to_string(epoch + 1));
    m.epoch_loss.push_back(mean);
  }
  return m;
}

PerturbationResult importance(const EmbeddingModel& base,
                              const ExtendedSubgraph& extended,
                              const Triple& fact, EntityId v,
                              const RetrainConfig& cfg) {
  PerturbationResult r;
  r.removed = v;
  auto perturbed = perturb(extended.graph, fact, v);
  r.original_score = score(base, fact);
  RetrainConfig local = cfg;
  local.seed = derive_seed(cfg.seed, {fact.head, fact.relation, fact.tail, v});
  auto tuned = finetune(base, perturbed, extended.frontier, local);
  r.perturbed_score = tuned.score(fact);
  r.importance = r.original_score - r.perturbed_score;
  return r;
}

}  // namespace kgx
