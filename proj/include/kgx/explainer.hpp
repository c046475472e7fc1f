#pragma once
// Key-subgraph search for one predicted fact.
//
// The greedy search walks out from the head one layer at a time. Each layer
// scores every unvisited neighbor of the current search frontier by its
// perturbation importance and keeps the top n as the next frontier. It
// stops as soon as the tail is adjacent to the frontier. If the tail is never
// reached, one shortest head-tail path inside the enclosing subgraph is
// added and the result is flagged.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kgx/kge.hpp"
#include "kgx/retrain.hpp"
#include "kgx/subgraph.hpp"

namespace kgx {

enum class ExplanationMethod { greedy, random };

const char* to_string(ExplanationMethod m);

struct Explanation {
  Triple fact;
  ExplanationMethod method = ExplanationMethod::greedy;
  std::vector<EntityId> key_entities;  // ascending
  Subgraph key_subgraph;
  std::map<EntityId, double> importance;
  std::vector<std::vector<EntityId>> trace;  // entities kept at each layer
  std::size_t hops_searched = 0;
  std::size_t evaluations = 0;
  bool reached = false;   // search found the tail on its own
  bool fallback = false;  // shortest-path patch was applied
  // Enclosing-subgraph statistics used by the complexity audit.
  std::size_t max_degree = 0;
  std::size_t enclosing_entities = 0;
  std::size_t enclosing_edges = 0;
};

struct SearchConfig {
  std::size_t n = 2;  // entities kept per layer
  std::size_t k = 2;  // enclosing-subgraph radius
  RetrainConfig retrain;
  std::uint64_t seed = 42;
};

// Importance of removing one entity; larger means more critical.
using ImportanceFn = std::function<double(EntityId)>;

Explanation greedy_search(const KnowledgeGraph& g, const EmbeddingModel& m,
                          const Triple& fact, const SearchConfig& cfg);

// Same search with a caller-supplied importance function.
Explanation greedy_search(const KnowledgeGraph& g, const Triple& fact,
                          const SearchConfig& cfg, const ImportanceFn& score_of);

// Union of up to n random simple head-tail paths (length <= 2k) inside the
// enclosing subgraph. Throws no_explanation when none exists.
Explanation random_explanation(const KnowledgeGraph& g, const Triple& fact,
                               const SearchConfig& cfg, Rng& rng);

enum class ExportFormat { graph_text, structured };

std::string export_explanation(const Explanation& e, ExportFormat format,
                               const Vocabulary& vocab);

// Inverse of the structured export. Names resolve through vocab and edges
// must exist in g.
Explanation parse_explanation(std::string_view document, const KnowledgeGraph& g,
                              const Vocabulary& vocab);

}  // namespace kgx
