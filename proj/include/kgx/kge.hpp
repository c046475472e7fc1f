#pragma once
// Embedding-based link predictors: TransE, DistMult and RotatE.
//
// Score functions (higher is more plausible):
//   TransE    phi = -|| e_h + e_r - e_t ||_2
//   DistMult  phi = sum_i e_h[i] e_r[i] e_t[i]
//   RotatE    phi = -sum_i | (e_h o e_r - e_t)_i |,  e_r[i] = exp(j theta_i)
//
// RotatE entity rows hold d real parts followed by d imaginary parts; its
// relation rows hold d phases in [0, 2pi), so every relation entry has unit
// modulus by construction.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "kgx/graph.hpp"
#include "kgx/random.hpp"

namespace kgx {

enum class ModelKind : std::uint32_t { transe = 0, distmult = 1, rotate = 2 };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
// 6.0 for the translational kinds, 1.0 for DistMult.
double default_margin(ModelKind kind);

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(ModelKind kind, std::size_t num_entities,
                 std::size_t num_relations, std::size_t dim, double margin);

  ModelKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double margin() const { return margin_; }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t entity_width() const {
    return kind_ == ModelKind::rotate ? 2 * dim_ : dim_;
  }
  std::size_t relation_width() const { return dim_; }

  std::span<const double> entity(EntityId v) const;
  std::span<double> entity(EntityId v);
  std::span<const double> relation(RelationId r) const;
  std::span<double> relation(RelationId r);

  std::span<const double> entity_table() const { return entities_; }
  std::span<double> entity_table() { return entities_; }
  std::span<const double> relation_table() const { return relations_; }
  std::span<double> relation_table() { return relations_; }

  void check_entity(EntityId v) const;
  void check_relation(RelationId r) const;

  Vocabulary vocab;

 private:
  ModelKind kind_ = ModelKind::transe;
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::size_t dim_ = 0;
  double margin_ = 0.0;
  std::vector<double> entities_;
  std::vector<double> relations_;
};

// Bitwise comparison of everything that is serialized.
bool same_bytes(const EmbeddingModel& a, const EmbeddingModel& b);

double score(ModelKind kind, std::span<const double> h,
             std::span<const double> r, std::span<const double> t);
double score(const EmbeddingModel& m, EntityId h, RelationId r, EntityId t);
inline double score(const EmbeddingModel& m, const Triple& x) {
  return score(m, x.head, x.relation, x.tail);
}

// Adds scale * d(phi)/d(param) into the three gradient buffers. At points
// where a norm is zero the zero subgradient is used.
void add_score_gradient(ModelKind kind, std::span<const double> h,
                        std::span<const double> r, std::span<const double> t,
                        double scale, std::span<double> grad_h,
                        std::span<double> grad_r, std::span<double> grad_t);

struct ScoreGradient {
  std::vector<double> head;
  std::vector<double> relation;
  std::vector<double> tail;
};

ScoreGradient score_gradient(const EmbeddingModel& m, const Triple& x);

enum class Corruption { tail, head_or_tail };

// Each negative replaces exactly one slot by an entity drawn uniformly from
// the pool (or from all entities) and different from the one it replaces.
// Returns an empty list when no replacement exists.
std::vector<Triple> negative_sample(std::span<const EntityId> pool,
                                    const Triple& positive, std::size_t n,
                                    Rng& rng, Corruption mode);
std::vector<Triple> negative_sample(const KnowledgeGraph& g,
                                    const Triple& positive, std::size_t n,
                                    Rng& rng,
                                    Corruption mode = Corruption::head_or_tail);

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t epochs = 500;
  double learning_rate = 0.05;
  std::size_t batch_size = 128;
  std::size_t negatives = 4;
  double margin = 6.0;
  std::uint64_t seed = 42;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_loss;  // mean margin loss per epoch
};

// Entity rows uniform in [-6/sqrt(d), 6/sqrt(d)]; TransE and DistMult
// relation rows likewise; RotatE phases uniform in [0, 2pi).
EmbeddingModel initialize_model(ModelKind kind, std::size_t num_entities,
                                std::size_t num_relations, std::size_t dim,
                                double margin, std::uint64_t seed);

// Mini-batch SGD on max(0, margin - phi(pos) + phi(neg)), averaged over the
// negatives of each positive and summed over the batch. Throws
// training_diverged naming the epoch if the loss stops being finite.
TrainResult pretrain(const KnowledgeGraph& g, ModelKind kind,
                     const TrainConfig& cfg);

// Wraps an angle into [0, 2pi).
double wrap_phase(double theta);

// |{v in candidates : phi(h,r,v) >= phi(h,r,t)}|. Throws invalid_query when
// t is not a candidate.
std::size_t tail_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t, std::span<const EntityId> candidates);
std::size_t head_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t, std::span<const EntityId> candidates);
// out[v] = phi(h, r, v) for every entity v; bit-identical to score().
void tail_scores(const EmbeddingModel& m, EntityId h, RelationId r,
                 std::span<double> out);

// Rank against every entity of the model.
std::size_t tail_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t);

double hits_at_1_on(const EmbeddingModel& m, std::span<const Triple> facts);

void write_model(std::ostream& out, const EmbeddingModel& m);
EmbeddingModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const EmbeddingModel& m);
EmbeddingModel load_model(const std::filesystem::path& path);

}  // namespace kgx
