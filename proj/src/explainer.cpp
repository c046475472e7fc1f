#include "kgx/explainer.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "kgx/error.hpp"

namespace kgx {

using ordered_json = nlohmann::ordered_json;

const char* to_string(ExplanationMethod m) {
  return m == ExplanationMethod::greedy ? "greedy" : "random";
}

namespace {

void fill_enclosing_stats(Explanation& e, const Subgraph& g,
                          const LocalAdjacency& adj) {
  e.max_degree = adj.max_degree();
  e.enclosing_entities = g.num_entities();
  e.enclosing_edges = g.num_edges();
}

void insert_sorted(std::vector<EntityId>& xs, EntityId v) {
  auto it = std::lower_bound(xs.begin(), xs.end(), v);
  if (it == xs.end() || *it != v) xs.insert(it, v);
}

}  // namespace

Explanation greedy_search(const KnowledgeGraph& g, const EmbeddingModel& m,
                          const Triple& fact, const SearchConfig& cfg) {
  auto enclosing = enclosing_subgraph(g, fact.head, fact.tail, cfg.k);
  auto extended = extend_subgraph(g, enclosing);
  RetrainConfig rc = cfg.retrain;
  rc.seed = derive_seed(cfg.seed, {rc.seed});
  return greedy_search(g, fact, cfg, [&](EntityId v) {
    return importance(m, extended, fact, v, rc).importance;
  });
}

Explanation greedy_search(const KnowledgeGraph& g, const Triple& fact,
                          const SearchConfig& cfg, const ImportanceFn& score_of) {
  if (cfg.n == 0 || cfg.k == 0)
    throw Error(ErrorCode::invalid_input, "n and k must be at least 1");
  const EntityId h = fact.head, t = fact.tail;
  auto enclosing = enclosing_subgraph(g, h, t, cfg.k);
  LocalAdjacency adj(enclosing);

  Explanation e;
  e.fact = fact;
  e.method = ExplanationMethod::greedy;
  fill_enclosing_stats(e, enclosing, adj);

  std::vector<EntityId> visited{h};
  std::vector<EntityId> key{h};
  std::vector<EntityId> frontier{h};
  const std::size_t max_layers = 2 * cfg.k;

  while (!frontier.empty()) {
    ++e.hops_searched;
    bool tail_adjacent = std::any_of(frontier.begin(), frontier.end(), [&](EntityId u) {
      auto nb = adj.neighbors(u);
      return std::binary_search(nb.begin(), nb.end(), t);
    });
    if (tail_adjacent) {
      insert_sorted(key, t);
      e.reached = true;
      break;
    }
    // The final permitted layer only checks for the tail.
    if (e.hops_searched >= max_layers) break;

    std::vector<std::pair<double, EntityId>> heap;
    for (EntityId u : frontier) {
      for (EntityId v : adj.neighbors(u)) {
        if (std::binary_search(visited.begin(), visited.end(), v)) continue;
        insert_sorted(visited, v);
        double delta = score_of(v);
        ++e.evaluations;
        e.importance[v] = delta;
        heap.emplace_back(delta, v);
      }
    }
    // Max-heap order: larger importance first, then smaller id.
    std::sort(heap.begin(), heap.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    frontier.clear();
    for (std::size_t i = 0; i < std::min(cfg.n, heap.size()); ++i)
      frontier.push_back(heap[i].second);
    std::sort(frontier.begin(), frontier.end());
    for (EntityId v : frontier) insert_sorted(key, v);
    if (!frontier.empty()) e.trace.push_back(frontier);
  }

  if (!e.reached) {
    auto path = shortest_path(enclosing, h, t);
    if (path.empty())
      throw Error(ErrorCode::no_explanation,
                  "no path between " + std::to_string(h) + " and " +
                      std::to_string(t) + " inside the enclosing subgraph");
    for (EntityId v : path) insert_sorted(key, v);
    e.fallback = true;
  }
  e.key_entities = key;
  e.key_subgraph = induced_subgraph(enclosing, key, SubgraphRole::key);
  return e;
}

namespace {

bool random_path(const LocalAdjacency& adj, EntityId at, EntityId target,
                 std::size_t budget, std::vector<EntityId>& path, Rng& rng) {
  if (at == target) return true;
  if (budget == 0) return false;
  auto nb = adj.neighbors(at);
  std::vector<EntityId> order(nb.begin(), nb.end());
  std::shuffle(order.begin(), order.end(), rng);
  for (EntityId v : order) {
    if (std::find(path.begin(), path.end(), v) != path.end()) continue;
    path.push_back(v);
    if (random_path(adj, v, target, budget - 1, path, rng)) return true;
    path.pop_back();
  }
  return false;
}

}  // namespace

Explanation random_explanation(const KnowledgeGraph& g, const Triple& fact,
                               const SearchConfig& cfg, Rng& rng) {
  if (cfg.n == 0 || cfg.k == 0)
    throw Error(ErrorCode::invalid_input, "n and k must be at least 1");
  auto enclosing = enclosing_subgraph(g, fact.head, fact.tail, cfg.k);
  LocalAdjacency adj(enclosing);

  Explanation e;
  e.fact = fact;
  e.method = ExplanationMethod::random;
  fill_enclosing_stats(e, enclosing, adj);

  std::vector<EntityId> key;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    std::vector<EntityId> path{fact.head};
    if (!random_path(adj, fact.head, fact.tail, 2 * cfg.k, path, rng)) break;
    e.trace.push_back(path);
    e.hops_searched = std::max(e.hops_searched, path.size() - 1);
    for (EntityId v : path) insert_sorted(key, v);
  }
  if (key.empty())
    throw Error(ErrorCode::no_explanation,
                "no path of length <= " + std::to_string(2 * cfg.k) +
                    " inside the enclosing subgraph");
  e.reached = true;
  e.key_entities = key;
  e.key_subgraph = induced_subgraph(enclosing, key, SubgraphRole::random);
  return e;
}

namespace {

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

ordered_json triple_json(const Triple& t, const Vocabulary& vocab) {
  ordered_json j;
  j["head"] = vocab.entity_name(t.head);
  j["relation"] = vocab.relation_name(t.relation);
  j["tail"] = vocab.entity_name(t.tail);
  return j;
}

std::string to_dot(const Explanation& e, const Vocabulary& vocab) {
  const auto& g = *e.key_subgraph.parent;
  std::ostringstream os;
  os << "digraph explanation {\n  rankdir=LR;\n";
  for (EntityId v : e.key_entities) {
    std::string name = vocab.entity_name(v);
    // Quote the name first; the \n line breaks are DOT escapes.
    std::string label = dot_quote(name);
    label.pop_back();
    if (v == e.fact.head) label += "\\n(head)";
    if (v == e.fact.tail) label += "\\n(tail)";
    if (auto it = e.importance.find(v); it != e.importance.end()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "\\ndelta=%.6f", it->second);
      label += buf;
    }
    os << "  " << dot_quote(name) << " [label=" << label << '"';
    if (v == e.fact.head || v == e.fact.tail) os << ", shape=box";
    os << "];\n";
  }
  for (EdgeId id : e.key_subgraph.edges) {
    const auto& t = g.triple(id);
    os << "  " << dot_quote(vocab.entity_name(t.head)) << " -> "
       << dot_quote(vocab.entity_name(t.tail))
       << " [label=" << dot_quote(vocab.relation_name(t.relation)) << "];\n";
  }
  os << "  " << dot_quote(vocab.entity_name(e.fact.head)) << " -> "
     << dot_quote(vocab.entity_name(e.fact.tail))
     << " [label=" << dot_quote(vocab.relation_name(e.fact.relation) + "?")
     << ", style=dashed];\n";
  os << "}\n";
  return os.str();
}

std::string to_json(const Explanation& e, const Vocabulary& vocab) {
  const auto& g = *e.key_subgraph.parent;
  ordered_json j;
  j["fact"] = triple_json(e.fact, vocab);
  j["method"] = to_string(e.method);
  j["entities"] = ordered_json::array();
  for (EntityId v : e.key_entities) j["entities"].push_back(vocab.entity_name(v));
  j["edges"] = ordered_json::array();
  for (EdgeId id : e.key_subgraph.edges)
    j["edges"].push_back(triple_json(g.triple(id), vocab));
  j["importance"] = ordered_json::object();
  for (const auto& [v, d] : e.importance) j["importance"][vocab.entity_name(v)] = d;
  j["trace"] = ordered_json::array();
  for (const auto& layer : e.trace) {
    ordered_json names = ordered_json::array();
    for (EntityId v : layer) names.push_back(vocab.entity_name(v));
    j["trace"].push_back(std::move(names));
  }
  j["counters"] = {{"evaluations", e.evaluations},
                   {"hops", e.hops_searched},
                   {"max_degree", e.max_degree},
                   {"enclosing_entities", e.enclosing_entities},
                   {"enclosing_edges", e.enclosing_edges}};
  j["reached"] = e.reached;
  j["fallback"] = e.fallback;
  return j.dump(2) + "\n";
}

EntityId entity_of(const Vocabulary& vocab, const std::string& name) {
  auto id = vocab.entities.find(name);
  if (!id) throw Error(ErrorCode::invalid_entity, "unknown entity '" + name + "'");
  return *id;
}

Triple triple_of(const ordered_json& j, const Vocabulary& vocab) {
  Triple t;
  t.head = entity_of(vocab, j.at("head").get<std::string>());
  auto r = vocab.relations.find(j.at("relation").get<std::string>());
  if (!r) throw Error(ErrorCode::invalid_relation, "unknown relation");
  t.relation = *r;
  t.tail = entity_of(vocab, j.at("tail").get<std::string>());
  return t;
}

}  // namespace

std::string export_explanation(const Explanation& e, ExportFormat format,
                               const Vocabulary& vocab) {
  return format == ExportFormat::graph_text ? to_dot(e, vocab) : to_json(e, vocab);
}

Explanation parse_explanation(std::string_view document, const KnowledgeGraph& g,
                              const Vocabulary& vocab) {
  ordered_json j;
  try {
    j = ordered_json::parse(document);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse_error, std::string("explanation: ") + ex.what());
  }
  try {
    Explanation e;
    e.fact = triple_of(j.at("fact"), vocab);
    e.method = j.value("method", "greedy") == "random" ? ExplanationMethod::random
                                                       : ExplanationMethod::greedy;
    for (const auto& name : j.at("entities"))
      e.key_entities.push_back(entity_of(vocab, name.get<std::string>()));
    std::sort(e.key_entities.begin(), e.key_entities.end());
    e.key_subgraph.parent = &g;
    e.key_subgraph.role = e.method == ExplanationMethod::random ? SubgraphRole::random
                                                                : SubgraphRole::key;
    e.key_subgraph.entities = e.key_entities;
    for (const auto& edge : j.at("edges")) {
      auto t = triple_of(edge, vocab);
      auto id = g.find(t);
      if (!id)
        throw Error(ErrorCode::invalid_input, "explanation edge is not in the graph");
      e.key_subgraph.edges.push_back(*id);
    }
    std::sort(e.key_subgraph.edges.begin(), e.key_subgraph.edges.end());
    for (const auto& [name, d] : j.at("importance").items())
      e.importance[entity_of(vocab, name)] = d.get<double>();
    if (j.contains("trace"))
      for (const auto& layer : j.at("trace")) {
        std::vector<EntityId> ids;
        for (const auto& name : layer) ids.push_back(entity_of(vocab, name.get<std::string>()));
        e.trace.push_back(std::move(ids));
      }
    const auto& c = j.at("counters");
    e.evaluations = c.at("evaluations").get<std::size_t>();
    e.hops_searched = c.at("hops").get<std::size_t>();
    e.max_degree = c.value("max_degree", std::size_t{0});
    e.enclosing_entities = c.value("enclosing_entities", std::size_t{0});
    e.enclosing_edges = c.value("enclosing_edges", std::size_t{0});
    e.reached = j.value("reached", true);
    e.fallback = j.at("fallback").get<bool>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse_error, std::string("explanation: ") + ex.what());
  }
}

}  // namespace kgx
