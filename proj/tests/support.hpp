#pragma once
// Shared fixtures for the unit tests: random graphs and brute-force oracles
// that share no code with the library's traversal routines.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <set>
#include <vector>

#include "kgx/graph.hpp"
#include "kgx/random.hpp"

namespace kgx::test {

inline KnowledgeGraph random_graph(Rng& rng, std::size_t entities, std::size_t relations,
                                   std::size_t triples) {
  std::set<Triple> seen;
  for (std::size_t i = 0; i < triples; ++i) {
    Triple t{static_cast<EntityId>(uniform_index(rng, entities)),
             static_cast<RelationId>(uniform_index(rng, relations)),
             static_cast<EntityId>(uniform_index(rng, entities))};
    if (t.head != t.tail) seen.insert(t);
  }
  return KnowledgeGraph(entities, relations, {seen.begin(), seen.end()});
}

// Dense adjacency matrix of the undirected view.
inline std::vector<std::vector<char>> adjacency_matrix(const KnowledgeGraph& g) {
  const std::size_t n = g.num_entities();
  std::vector<std::vector<char>> a(n, std::vector<char>(n, 0));
  for (const auto& t : g.triples()) {
    if (t.head == t.tail) continue;
    a[t.head][t.tail] = a[t.tail][t.head] = 1;
  }
  return a;
}

// All-pairs hop distances by Floyd-Warshall; unreachable is SIZE_MAX / 4.
inline std::vector<std::vector<std::size_t>> all_distances(const KnowledgeGraph& g) {
  const std::size_t n = g.num_entities(), inf = SIZE_MAX / 4;
  auto a = adjacency_matrix(g);
  std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (a[i][j]) d[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Triple ids of g whose two endpoints are both in the (sorted) entity set.
inline std::vector<EdgeId> filter_edges(const KnowledgeGraph& g,
                                        const std::vector<EntityId>& entities) {
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < g.num_triples(); ++e) {
    const auto& t = g.triple(e);
    if (std::binary_search(entities.begin(), entities.end(), t.head) &&
        std::binary_search(entities.begin(), entities.end(), t.tail))
      out.push_back(e);
  }
  return out;
}

inline KnowledgeGraph path_graph(std::size_t length) {
  std::vector<Triple> ts;
  for (std::size_t i = 0; i < length; ++i)
    ts.push_back({static_cast<EntityId>(i), 0, static_cast<EntityId>(i + 1)});
  return KnowledgeGraph(length + 1, 1, ts);
}

}  // namespace kgx::test
