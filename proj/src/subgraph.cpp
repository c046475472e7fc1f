#include "kgx/subgraph.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>

#include "kgx/error.hpp"

namespace kgx {

const char* to_string(SubgraphRole role) {
  switch (role) {
    case SubgraphRole::enclosing: return "enclosing";
    case SubgraphRole::extended: return "extended";
    case SubgraphRole::key: return "key";
    case SubgraphRole::random: return "random";
    case SubgraphRole::perturbed: return "perturbed";
  }
  return "unknown";
}

bool Subgraph::contains(EntityId v) const {
  return std::binary_search(entities.begin(), entities.end(), v);
}

bool FrontierSet::contains(EntityId v) const {
  return std::binary_search(entities.begin(), entities.end(), v);
}

LocalAdjacency::LocalAdjacency(const Subgraph& sub)
    : sub_(&sub), neighbors_(sub.entities.size()) {
  std::vector<std::size_t> degree(sub.entities.size(), 0);
  for (EdgeId e : sub.edges) {
    const auto& t = sub.parent->triple(e);
    auto a = *index_of(t.head);
    auto b = *index_of(t.tail);
    ++degree[a];
    if (a != b) {
      ++degree[b];
      neighbors_[a].push_back(t.tail);
      neighbors_[b].push_back(t.head);
    }
  }
  for (auto& n : neighbors_) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  for (auto d : degree) max_degree_ = std::max(max_degree_, d);
}

std::optional<std::size_t> LocalAdjacency::index_of(EntityId v) const {
  auto it = std::lower_bound(sub_->entities.begin(), sub_->entities.end(), v);
  if (it == sub_->entities.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - sub_->entities.begin());
}

std::span<const EntityId> LocalAdjacency::neighbors(EntityId v) const {
  auto i = index_of(v);
  if (!i) return {};
  return neighbors_[*i];
}

std::vector<std::pair<EntityId, std::size_t>> bfs_distances(
    const KnowledgeGraph& g, EntityId source, std::size_t max_hops) {
  g.check_entity(source);
  std::unordered_map<EntityId, std::size_t> dist;
  std::vector<std::pair<EntityId, std::size_t>> order;
  std::deque<EntityId> queue{source};
  dist.emplace(source, 0);
  order.emplace_back(source, 0);
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    std::size_t du = dist[u];
    if (du == max_hops) continue;
    for (EntityId w : g.neighbors(u)) {
      if (dist.emplace(w, du + 1).second) {
        order.emplace_back(w, du + 1);
        queue.push_back(w);
      }
    }
  }
  return order;
}

std::vector<EntityId> k_hop_neighbors(const KnowledgeGraph& g, EntityId v,
                                      std::size_t k) {
  auto dist = bfs_distances(g, v, k);
  std::vector<EntityId> out;
  out.reserve(dist.size());
  for (const auto& [u, d] : dist) out.push_back(u);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<EdgeId> induced_edges(const KnowledgeGraph& g,
                                  const std::vector<EntityId>& entities) {
  std::vector<EdgeId> edges;
  auto in_set = [&](EntityId v) {
    return std::binary_search(entities.begin(), entities.end(), v);
  };
  for (EntityId v : entities) {
    for (EdgeId e : g.incident(v)) {
      const auto& t = g.triple(e);
      // Record each edge once, from its head side.
      if (t.head == v && in_set(t.tail)) edges.push_back(e);
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace

Subgraph enclosing_subgraph(const KnowledgeGraph& g, EntityId h, EntityId t,
                            std::size_t k) {
  g.check_entity(h);
  g.check_entity(t);
  if (h == t)
    throw Error(ErrorCode::invalid_input,
                "enclosing subgraph needs distinct endpoints");
  auto near_h = k_hop_neighbors(g, h, k);
  auto near_t = k_hop_neighbors(g, t, k);
  Subgraph sub;
  sub.parent = &g;
  sub.role = SubgraphRole::enclosing;
  std::set_intersection(near_h.begin(), near_h.end(), near_t.begin(),
                        near_t.end(), std::back_inserter(sub.entities));
  if (sub.entities.empty())
    throw Error(ErrorCode::empty_subgraph,
                "entities " + std::to_string(h) + " and " + std::to_string(t) +
                    " are more than " + std::to_string(2 * k) + " hops apart");
  for (EntityId v : {h, t}) {
    auto it = std::lower_bound(sub.entities.begin(), sub.entities.end(), v);
    if (it == sub.entities.end() || *it != v) sub.entities.insert(it, v);
  }
  sub.edges = induced_edges(g, sub.entities);
  return sub;
}

ExtendedSubgraph extend_subgraph(const KnowledgeGraph& g, const Subgraph& sub) {
  ExtendedSubgraph out;
  for (EntityId v : sub.entities)
    for (EntityId u : g.neighbors(v))
      if (!sub.contains(u)) out.frontier.entities.push_back(u);
  auto& fr = out.frontier.entities;
  std::sort(fr.begin(), fr.end());
  fr.erase(std::unique(fr.begin(), fr.end()), fr.end());

  out.graph.parent = &g;
  out.graph.role = SubgraphRole::extended;
  std::set_union(sub.entities.begin(), sub.entities.end(), fr.begin(), fr.end(),
                 std::back_inserter(out.graph.entities));
  out.graph.edges = induced_edges(g, out.graph.entities);
  return out;
}

Subgraph induced_subgraph(const Subgraph& sub, std::span<const EntityId> selection,
                          SubgraphRole role) {
  Subgraph out;
  out.parent = sub.parent;
  out.role = role;
  out.entities.assign(selection.begin(), selection.end());
  std::sort(out.entities.begin(), out.entities.end());
  out.entities.erase(std::unique(out.entities.begin(), out.entities.end()),
                     out.entities.end());
  for (EntityId v : out.entities)
    if (!sub.contains(v))
      throw Error(ErrorCode::invalid_selection,
                  "entity " + std::to_string(v) + " is not in the subgraph");
  for (EdgeId e : sub.edges) {
    const auto& t = sub.parent->triple(e);
    if (out.contains(t.head) && out.contains(t.tail)) out.edges.push_back(e);
  }
  return out;
}

Subgraph full_subgraph(const KnowledgeGraph& g) {
  Subgraph out;
  out.parent = &g;
  out.role = SubgraphRole::enclosing;
  out.entities.resize(g.num_entities());
  for (EntityId v = 0; v < g.num_entities(); ++v) out.entities[v] = v;
  out.edges.resize(g.num_triples());
  for (EdgeId e = 0; e < g.num_triples(); ++e) out.edges[e] = e;
  return out;
}

bool is_connected(const Subgraph& sub) {
  if (sub.entities.size() <= 1) return true;
  LocalAdjacency adj(sub);
  std::vector<char> seen(sub.entities.size(), 0);
  std::deque<EntityId> queue{sub.entities.front()};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    for (EntityId w : adj.neighbors(u)) {
      auto i = *adj.index_of(w);
      if (!seen[i]) {
        seen[i] = 1;
        ++reached;
        queue.push_back(w);
      }
    }
  }
  return reached == sub.entities.size();
}

std::vector<EntityId> shortest_path(const Subgraph& sub, EntityId a, EntityId b) {
  if (!sub.contains(a) || !sub.contains(b)) return {};
  if (a == b) return {a};
  LocalAdjacency adj(sub);
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(sub.entities.size(), none);
  auto ia = *adj.index_of(a);
  parent[ia] = ia;
  std::deque<EntityId> queue{a};
  // Neighbor lists are ascending, so the first discovery of each entity
  // comes through the smallest-id parent on the earliest layer.
  while (!queue.empty() && parent[*adj.index_of(b)] == none) {
    EntityId u = queue.front();
    queue.pop_front();
    auto iu = *adj.index_of(u);
    for (EntityId w : adj.neighbors(u)) {
      auto iw = *adj.index_of(w);
      if (parent[iw] == none) {
        parent[iw] = iu;
        queue.push_back(w);
      }
    }
  }
  auto ib = *adj.index_of(b);
  if (parent[ib] == none) return {};
  std::vector<EntityId> path;
  for (auto i = ib; i != ia; i = parent[i]) path.push_back(sub.entities[i]);
  path.push_back(a);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace kgx
