#pragma once
// Entity-removal perturbation with localized fine-tuning.
//
// Fine-tuning only touches the extended subgraph around a query:
//   - trainable rows start from the pre-trained values,
//   - relation rows are read-only views into the pre-trained model,
//   - frontier entity rows are read-only views into the pre-trained model.
// The updater owns copies of the trainable rows and nothing else, so the
// frozen rows cannot change.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kgx/kge.hpp"
#include "kgx/subgraph.hpp"

namespace kgx {

struct RetrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 0.001;
  std::size_t negatives = 1;
  std::uint64_t seed = 42;
};

// Removes v and every incident edge. Other entities stay even if isolated.
// Throws protected_entity when v is the fact's head or tail and
// invalid_selection when v is not in the subgraph.
Subgraph perturb(const Subgraph& extended, const Triple& fact, EntityId v);

// Embedding model restricted to the entities of one perturbed subgraph.
class RetrainedModel {
 public:
  RetrainedModel(const EmbeddingModel& base, const Subgraph& support,
                 const FrontierSet& frontier);

  const EmbeddingModel& base() const { return *base_; }
  std::span<const EntityId> trainable() const { return trainable_ids_; }
  bool is_trainable(EntityId v) const;

  // Reads resolve to the private copy for trainable entities and to the
  // pre-trained model otherwise.
  std::span<const double> entity(EntityId v) const;
  std::span<const double> relation(RelationId r) const { return base_->relation(r); }
  double score(const Triple& x) const;

  // Set when the support had no triples and nothing was trained.
  bool no_triples = false;
  // Mean margin loss per epoch.
  std::vector<double> epoch_loss;

 private:
  friend RetrainedModel finetune(const EmbeddingModel&, const Subgraph&,
                                 const FrontierSet&, const RetrainConfig&);
  std::span<double> mutable_row(EntityId v);

  const EmbeddingModel* base_;
  std::vector<EntityId> trainable_ids_;  // ascending
  std::vector<double> rows_;
};

// SGD on the support's triples with negatives drawn from the support's
// entity set. Relations and frontier entities never change.
RetrainedModel finetune(const EmbeddingModel& base, const Subgraph& support,
                        const FrontierSet& frontier, const RetrainConfig& cfg);

struct PerturbationResult {
  EntityId removed = 0;
  double original_score = 0.0;
  double perturbed_score = 0.0;
  double importance = 0.0;  // original - perturbed
};

// Score drop of the fact after removing v and fine-tuning. The fine-tune
// seed is derived from (cfg.seed, fact, v) so the result does not depend on
// which other entities were evaluated before.
PerturbationResult importance(const EmbeddingModel& base,
                              const ExtendedSubgraph& extended,
                              const Triple& fact, EntityId v,
                              const RetrainConfig& cfg);

}  // namespace kgx
