#pragma once
// Subgraph extraction over the undirected view of a KnowledgeGraph.
//
//   enclosing  N_k(h) ∩ N_k(t), plus h and t, with every induced triple
//   extended   enclosing entities plus their 1-hop exterior (the frontier)
//   key        an entity selection inside another subgraph
//
// Triples keep their direction; only reachability ignores it.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kgx/graph.hpp"

namespace kgx {

enum class SubgraphRole { enclosing, extended, key, random, perturbed };

const char* to_string(SubgraphRole role);

struct Subgraph {
  const KnowledgeGraph* parent = nullptr;
  std::vector<EntityId> entities;  // ascending
  std::vector<EdgeId> edges;       // ascending triple ids of parent
  SubgraphRole role = SubgraphRole::enclosing;

  bool contains(EntityId v) const;
  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_edges() const { return edges.size(); }
};

// Entities whose embeddings stay frozen while the extended subgraph is
// retrained. Ascending.
struct FrontierSet {
  std::vector<EntityId> entities;

  bool contains(EntityId v) const;
};

// Local undirected adjacency of a subgraph: position i holds the sorted
// distinct neighbors (within the subgraph) of sub.entities[i].
class LocalAdjacency {
 public:
  explicit LocalAdjacency(const Subgraph& sub);

  std::optional<std::size_t> index_of(EntityId v) const;
  std::span<const EntityId> neighbors(EntityId v) const;
  // Max incident-edge count over the subgraph's entities, counting only
  // edges inside the subgraph.
  std::size_t max_degree() const { return max_degree_; }

 private:
  const Subgraph* sub_;
  std::vector<std::vector<EntityId>> neighbors_;
  std::size_t max_degree_ = 0;
};

// Unweighted distances from source on the undirected view, truncated at
// max_hops. Unreached entities are absent.
std::vector<std::pair<EntityId, std::size_t>> bfs_distances(
    const KnowledgeGraph& g, EntityId source, std::size_t max_hops);

// {s | d(v, s) <= k}, ascending, v included.
std::vector<EntityId> k_hop_neighbors(const KnowledgeGraph& g, EntityId v,
                                      std::size_t k);

// Throws empty_subgraph when h and t are more than 2k hops apart, and
// invalid_input when h == t.
Subgraph enclosing_subgraph(const KnowledgeGraph& g, EntityId h, EntityId t,
                            std::size_t k);

struct ExtendedSubgraph {
  Subgraph graph;
  FrontierSet frontier;
};

ExtendedSubgraph extend_subgraph(const KnowledgeGraph& g, const Subgraph& sub);

// Restriction of sub to the entity selection. Throws invalid_selection when
// the selection is not contained in sub.
Subgraph induced_subgraph(const Subgraph& sub, std::span<const EntityId> selection,
                          SubgraphRole role = SubgraphRole::key);

// Whole graph as a subgraph (entities and edges).
Subgraph full_subgraph(const KnowledgeGraph& g);

bool is_connected(const Subgraph& sub);

// One shortest undirected path from a to b inside sub, endpoints included.
// Ties resolve toward smaller entity ids. Empty when no path exists.
std::vector<EntityId> shortest_path(const Subgraph& sub, EntityId a, EntityId b);

}  // namespace kgx
