#pragma once
// Subgraph evaluator: a relational graph-attention network that scores a
// query (h, r, t) from a subgraph alone, distilled from a teacher KGE.
//
// Layer l maps entity states x^l to x^{l+1}:
//   x_i^{l+1} = sum over messages (j -> i, q) of alpha * W_q^l (e_q^l + x_j^l)
//   alpha     = sigmoid(a . [x_i^l ; x_j^l ; e_q^l])
// Every triple (u, r, v) sends v a message from u under r and u a message
// from v under the inverse of r, so there are 2|R| message relations.
// Attention is not normalized across neighbors.
//
// Readout:
//   X = mean_i relu(F x_i^L + b)
//   Z = w_r . X + c_r            (r = query relation)
//
// Input features: x_i^0 = P emb_i, where emb_i is the teacher's entity row,
// optionally plus learned labels for the hop distance of i to the query head
// and to the query tail inside the subgraph.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgx/kge.hpp"
#include "kgx/subgraph.hpp"

namespace kgx {

enum class InputFeatures : std::uint32_t { embeddings = 0, embeddings_and_hops = 1 };

const char* to_string(InputFeatures f);
InputFeatures parse_input_features(std::string_view name);

struct EvaluatorShape {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t num_relations = 0;  // base relations; messages use twice this
  std::size_t input_width = 0;    // teacher entity row width
  std::size_t radius = 2;         // hop labels take values 0..radius+1
  InputFeatures features = InputFeatures::embeddings_and_hops;

  bool operator==(const EvaluatorShape&) const = default;
};

// Views into one flat parameter vector. The same layout is used for
// gradients, so a gradient buffer is just another vector of size().
class ParameterLayout {
 public:
  explicit ParameterLayout(const EvaluatorShape& shape);

  std::size_t size() const { return total_; }
  std::size_t hop_labels() const { return shape_.radius + 2; }

  // Offsets of each block.
  std::size_t projection() const { return projection_; }        // d x input_width
  std::size_t head_hops() const { return head_hops_; }          // labels x d
  std::size_t tail_hops() const { return tail_hops_; }          // labels x d
  std::size_t transform(std::size_t l, std::size_t q) const;    // d x d
  std::size_t relation(std::size_t l, std::size_t q) const;     // d
  std::size_t attention() const { return attention_; }          // 3d
  std::size_t readout_weight() const { return readout_weight_; }  // d x d
  std::size_t readout_bias() const { return readout_bias_; }      // d
  std::size_t score_weight(std::size_t r) const;                  // d
  std::size_t score_bias(std::size_t r) const;                    // 1

  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  // Named parameter groups, in storage order.
  std::vector<Block> blocks() const;

 private:
  EvaluatorShape shape_;
  std::size_t projection_ = 0, head_hops_ = 0, tail_hops_ = 0;
  std::size_t transforms_ = 0, relations_ = 0, attention_ = 0;
  std::size_t readout_weight_ = 0, readout_bias_ = 0;
  std::size_t score_weights_ = 0, score_biases_ = 0;
  std::size_t total_ = 0;
};

class EvaluatorModel {
 public:
  EvaluatorModel() : layout_(EvaluatorShape{}) {}
  explicit EvaluatorModel(const EvaluatorShape& shape);

  const EvaluatorShape& shape() const { return shape_; }
  const ParameterLayout& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Glorot-uniform matrices, small uniform vectors, zero biases.
  void initialize(std::uint64_t seed);

 private:
  EvaluatorShape shape_;
  ParameterLayout layout_;
  std::vector<double> params_;
};

bool same_bytes(const EvaluatorModel& a, const EvaluatorModel& b);

// Preprocessed subgraph for one query: local entity order, message list and
// hop labels.
struct EvaluatorInput {
  struct Message {
    std::uint32_t dst;
    std::uint32_t src;
    std::uint32_t relation;  // in [0, 2|R|)
  };

  std::vector<EntityId> entities;
  std::vector<Message> messages;
  std::vector<std::uint8_t> head_hops;
  std::vector<std::uint8_t> tail_hops;
  RelationId query_relation = 0;
};

// Builds the evaluator input for query on sub. Triples equal to the query
// itself are dropped, so the evaluator never sees the link it is asked to
// score. Hop distances are measured inside the remaining subgraph and capped
// at radius + 1.
EvaluatorInput make_input(const Subgraph& sub, const Triple& query,
                          std::size_t radius);

// Row-major |entities| x input_width matrix of teacher rows.
std::vector<double> teacher_features(const EmbeddingModel& teacher,
                                     const EvaluatorInput& input);

struct ForwardCache {
  std::vector<std::vector<double>> states;  // L+1 entries of n x d
  std::vector<std::vector<double>> alpha;   // per layer, per message
  std::vector<std::vector<double>> fused;   // per layer, messages x d (e_q + x_j)
  std::vector<std::vector<double>> moved;   // per layer, messages x d (W_q fused)
  std::vector<double> readout_pre;          // n x d
  std::vector<double> pooled;               // d
};

// Entity states after the last layer (n x d). Throws shape_mismatch when
// features are not n x input_width.
std::vector<double> rgat_forward(const EvaluatorModel& e, const EvaluatorInput& in,
                                 std::span<const double> features,
                                 ForwardCache* cache = nullptr);

// Z for the query. Throws invalid_input on an empty subgraph.
double subgraph_score(const EvaluatorModel& e, const EvaluatorInput& in,
                      std::span<const double> features,
                      ForwardCache* cache = nullptr);

// Adds upstream * dZ/dtheta into grad (size layout().size()). The cache must
// come from subgraph_score on the same input.
void subgraph_score_backward(const EvaluatorModel& e, const EvaluatorInput& in,
                             std::span<const double> features,
                             const ForwardCache& cache, double upstream,
                             std::span<double> grad);

struct DistillConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t radius = 2;
  std::size_t epochs = 20;
  double learning_rate = 0.0015;
  double lambda = 0.5;
  std::size_t negatives = 4;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 42;
  InputFeatures features = InputFeatures::embeddings_and_hops;
  std::optional<std::filesystem::path> cache_dir;
};

struct DistillResult {
  EvaluatorModel model;
  std::vector<double> epoch_objective;  // mean per fact
  std::vector<double> epoch_gap;        // mean (phi - Z)^2 per fact
  std::size_t cache_hits = 0;
};

// Minimizes sum (phi - Z)^2 + lambda (-Z_pos + mean_n Z_neg) over the
// training triples with Adam. Negative tails are drawn uniformly from the
// positive's enclosing subgraph (excluding its endpoints).
using EpochCallback =
    std::function<void(std::size_t epoch, double objective, double gap)>;

DistillResult distill(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                      const DistillConfig& cfg, const EpochCallback& on_epoch = {});

// Mean squared teacher/evaluator gap over facts, on enclosing subgraphs.
double alignment_gap(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                     const EvaluatorModel& e, std::span<const Triple> facts);

// Scores queries on their enclosing subgraphs in one graph.
class SubgraphScorer {
 public:
  SubgraphScorer(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                 const EvaluatorModel& e);

  // Z on the enclosing subgraph of (h, t), or nullopt when h and t are too
  // far apart for one to exist (or h == t).
  std::optional<double> score(const Triple& query) const;
  double score_on(const Triple& query, const Subgraph& sub) const;

  // Z for (h, r, v) over every v in candidates; nullopt entries are
  // unscorable. Reuses the head's neighborhood across candidates.
  std::vector<std::optional<double>> score_candidates(
      EntityId h, RelationId r, std::span<const EntityId> candidates) const;

  const KnowledgeGraph& graph() const { return *g_; }
  const EvaluatorModel& evaluator() const { return *e_; }

 private:
  const KnowledgeGraph* g_;
  const EmbeddingModel* teacher_;
  const EvaluatorModel* e_;
};

enum class RankMode { full, explained };

// Rank of the true tail by Z among candidates (ties counted, >=). In full
// mode every candidate, including the tail, is scored on its enclosing
// subgraph; in explained mode the tail is scored on the explanation instead.
// Candidates without an enclosing subgraph never outrank the tail; an
// unscorable tail gets rank |candidates|. Throws invalid_query when the tail
// is not a candidate.
std::size_t evaluator_rank(const SubgraphScorer& scorer, const Triple& fact,
                           const Subgraph* explanation,
                           std::span<const EntityId> candidates, RankMode mode);

// Rank from precomputed scores; index of the tail within candidates given.
std::size_t rank_from_scores(std::span<const std::optional<double>> scores,
                             std::size_t tail_index,
                             std::optional<double> tail_score);

void write_evaluator(std::ostream& out, const EvaluatorModel& e);
EvaluatorModel read_evaluator(std::istream& in);
void save_evaluator(const std::filesystem::path& path, const EvaluatorModel& e);
EvaluatorModel load_evaluator(const std::filesystem::path& path);

// On-disk cache of per-fact enclosing subgraphs, keyed by (fact, radius).
// The directory holds index.json and subgraphs.bin; the index records a
// fingerprint of the graph so a stale cache is rebuilt instead of reused.
class SubgraphCache {
 public:
  SubgraphCache(std::filesystem::path dir, const KnowledgeGraph& g,
                std::size_t radius);

  // Entities and edges of the enclosing subgraph of each fact, loading from
  // disk when the cache matches and computing (then saving) otherwise.
  // Facts without an enclosing subgraph yield empty entries.
  std::vector<Subgraph> load_or_build(std::span<const Triple> facts);
  bool was_hit() const { return hit_; }

 private:
  std::filesystem::path dir_;
  const KnowledgeGraph* g_;
  std::size_t radius_;
  bool hit_ = false;
};

std::uint64_t graph_fingerprint(const KnowledgeGraph& g);

}  // namespace kgx
