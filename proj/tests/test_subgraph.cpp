#include <doctest.h>

#include "kgx/error.hpp"
#include "kgx/subgraph.hpp"
#include "support.hpp"

using namespace kgx;

namespace {

std::vector<EntityId> within(const std::vector<std::vector<std::size_t>>& d, EntityId v,
                             std::size_t k) {
  std::vector<EntityId> out;
  for (EntityId u = 0; u < d.size(); ++u)
    if (d[v][u] <= k) out.push_back(u);
  return out;
}

}  // namespace

TEST_CASE("k-hop neighborhoods match all-pairs distances") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 46);
    auto g = test::random_graph(rng, n, 3, n + uniform_index(rng, n));
    auto d = test::all_distances(g);
    for (std::size_t k = 0; k <= 3; ++k) {
      EntityId v = static_cast<EntityId>(uniform_index(rng, n));
      CHECK(k_hop_neighbors(g, v, k) == within(d, v, k));
    }
  }
}

TEST_CASE("enclosing, extended and induced subgraphs match brute force") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + uniform_index(rng, 47);
    auto g = test::random_graph(rng, n, 4, n + uniform_index(rng, 2 * n));
    auto d = test::all_distances(g);
    const std::size_t k = 1 + uniform_index(rng, 2);
    EntityId h = static_cast<EntityId>(uniform_index(rng, n));
    EntityId t = static_cast<EntityId>(uniform_index(rng, n));
    if (h == t) {
      CHECK_THROWS_AS(enclosing_subgraph(g, h, t, k), Error);
      continue;
    }
    if (d[h][t] > 2 * k) {
      try {
        enclosing_subgraph(g, h, t, k);
        FAIL("expected empty_subgraph");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_subgraph);
      }
      continue;
    }
    std::vector<EntityId> expect;
    for (EntityId v = 0; v < n; ++v)
      if ((d[h][v] <= k && d[t][v] <= k) || v == h || v == t) expect.push_back(v);
    auto sub = enclosing_subgraph(g, h, t, k);
    CHECK(sub.entities == expect);
    CHECK(sub.edges == test::filter_edges(g, expect));

    auto ext = extend_subgraph(g, sub);
    std::vector<EntityId> frontier, all;
    for (EntityId v = 0; v < n; ++v) {
      bool inside = std::binary_search(expect.begin(), expect.end(), v);
      bool touches = false;
      for (EntityId u : expect) touches |= d[u][v] == 1;
      if (!inside && touches) frontier.push_back(v);
      if (inside || touches) all.push_back(v);
    }
    CHECK(ext.frontier.entities == frontier);
    CHECK(ext.graph.entities == all);
    CHECK(ext.graph.edges == test::filter_edges(g, all));

    std::vector<EntityId> pick;
    for (EntityId v : expect)
      if (uniform_index(rng, 2)) pick.push_back(v);
    auto ind = induced_subgraph(sub, pick);
    CHECK(ind.entities == pick);
    CHECK(ind.edges == test::filter_edges(g, pick));
  }
}

TEST_CASE("induced selection outside the subgraph is rejected") {
  auto g = test::path_graph(4);
  auto sub = enclosing_subgraph(g, 0, 2, 1);
  std::vector<EntityId> bad{0, 4};
  CHECK_THROWS_AS(induced_subgraph(sub, bad), Error);
}

TEST_CASE("single edge enclosing subgraph") {
  KnowledgeGraph g(2, 1, {{0, 0, 1}});
  auto sub = enclosing_subgraph(g, 0, 1, 2);
  CHECK(sub.entities == std::vector<EntityId>{0, 1});
  CHECK(sub.num_edges() == 1);
}

TEST_CASE("shortest path has the oracle length and lies in the subgraph") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 6 + uniform_index(rng, 30);
    auto g = test::random_graph(rng, n, 2, 2 * n);
    auto d = test::all_distances(g);
    auto all = full_subgraph(g);
    EntityId a = static_cast<EntityId>(uniform_index(rng, n));
    EntityId b = static_cast<EntityId>(uniform_index(rng, n));
    auto p = shortest_path(all, a, b);
    if (d[a][b] > n) {
      CHECK(p.empty());
      continue;
    }
    REQUIRE(p.size() == d[a][b] + 1);
    CHECK(p.front() == a);
    CHECK(p.back() == b);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) CHECK(d[p[i]][p[i + 1]] == 1);
  }
}

TEST_CASE("connectivity of the undirected view") {
  KnowledgeGraph g(4, 1, {{0, 0, 1}, {2, 0, 1}, {3, 0, 3}});
  auto all = full_subgraph(g);
  CHECK_FALSE(is_connected(all));
  std::vector<EntityId> sel{0, 1, 2};
  CHECK(is_connected(induced_subgraph(all, sel)));
}
