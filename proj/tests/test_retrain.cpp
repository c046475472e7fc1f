#include <doctest.h>

#include <cstring>

#include "kgx/error.hpp"
#include "kgx/retrain.hpp"
#include "support.hpp"

using namespace kgx;

namespace {

EmbeddingModel trained(const KnowledgeGraph& g, std::size_t epochs = 100) {
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = epochs;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.seed = 3;
  return pretrain(g, ModelKind::transe, cfg).model;
}

bool rows_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("perturb removes exactly the entity and its incident edges") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = test::random_graph(rng, 15, 2, 30);
    auto all = full_subgraph(g);
    Triple fact{0, 0, 1};
    EntityId v = static_cast<EntityId>(2 + uniform_index(rng, 13));
    auto p = perturb(all, fact, v);
    std::vector<EdgeId> expect;
    for (EdgeId e = 0; e < g.num_triples(); ++e)
      if (g.triple(e).head != v && g.triple(e).tail != v) expect.push_back(e);
    CHECK(p.edges == expect);
    CHECK(p.num_entities() == 14);
    CHECK_FALSE(p.contains(v));
  }
}

TEST_CASE("perturb edge cases") {
  // Star around 0, plus an isolated entity 4.
  KnowledgeGraph star(5, 1, {{0, 0, 1}, {0, 0, 2}, {3, 0, 0}});
  auto all = full_subgraph(star);
  CHECK(perturb(all, {1, 0, 2}, 0).num_edges() == 0);
  auto iso = perturb(all, {1, 0, 2}, 4);
  CHECK(iso.edges == all.edges);
  CHECK(iso.num_entities() == 4);

  for (EntityId endpoint : {1u, 2u}) {
    try {
      perturb(all, {1, 0, 2}, endpoint);
      FAIL("expected protected_entity");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::protected_entity);
    }
  }
}

TEST_CASE("fine-tuning never changes relations or frontier rows") {
  Rng rng(2);
  auto g = test::random_graph(rng, 30, 3, 70);
  auto m = trained(g, 20);
  const Triple& fact = g.triple(0);
  auto enc = enclosing_subgraph(g, fact.head, fact.tail, 1);
  auto ext = extend_subgraph(g, enc);
  auto before = m;
  RetrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  auto tuned = finetune(m, ext.graph, ext.frontier, cfg);
  CHECK(same_bytes(m, before));
  for (EntityId v : ext.frontier.entities) {
    CHECK_FALSE(tuned.is_trainable(v));
    CHECK(rows_equal(tuned.entity(v), m.entity(v)));
  }
  for (RelationId r = 0; r < g.num_relations(); ++r)
    CHECK(rows_equal(tuned.relation(r), m.relation(r)));
}

TEST_CASE("zero fine-tune epochs keep the pre-trained rows and zero importance") {
  Rng rng(3);
  auto g = test::random_graph(rng, 20, 2, 50);
  auto m = trained(g, 10);
  const Triple& fact = g.triple(1);
  auto ext = extend_subgraph(g, enclosing_subgraph(g, fact.head, fact.tail, 2));
  RetrainConfig cfg;
  cfg.epochs = 0;
  auto tuned = finetune(m, ext.graph, ext.frontier, cfg);
  for (EntityId v : ext.graph.entities) CHECK(rows_equal(tuned.entity(v), m.entity(v)));
  for (EntityId v : ext.graph.entities) {
    if (v == fact.head || v == fact.tail) continue;
    CHECK(importance(m, ext, fact, v, cfg).importance == 0.0);
  }
}

TEST_CASE("fine-tuning lowers the local loss") {
  Rng rng(4);
  auto g = test::random_graph(rng, 25, 2, 60);
  auto m = initialize_model(ModelKind::transe, 25, 2, 8, 6.0, 1);
  auto all = full_subgraph(g);
  RetrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.01;
  auto tuned = finetune(m, all, FrontierSet{}, cfg);
  REQUIRE(tuned.epoch_loss.size() == 50);
  CHECK(tuned.epoch_loss.back() < tuned.epoch_loss.front());
}

TEST_CASE("support without triples is flagged and left unchanged") {
  KnowledgeGraph g(3, 1, {{0, 0, 1}});
  auto m = initialize_model(ModelKind::transe, 3, 1, 4, 6.0, 1);
  Subgraph lonely{&g, {2}, {}, SubgraphRole::perturbed};
  auto tuned = finetune(m, lonely, FrontierSet{}, RetrainConfig{});
  CHECK(tuned.no_triples);
  CHECK(rows_equal(tuned.entity(2), m.entity(2)));
}

TEST_CASE("importance is deterministic and independent of evaluation order") {
  Rng rng(5);
  auto g = test::random_graph(rng, 20, 2, 50);
  auto m = trained(g, 10);
  const Triple& fact = g.triple(2);
  auto ext = extend_subgraph(g, enclosing_subgraph(g, fact.head, fact.tail, 2));
  RetrainConfig cfg;
  std::vector<EntityId> vs;
  for (EntityId v : ext.graph.entities)
    if (v != fact.head && v != fact.tail) vs.push_back(v);
  std::vector<double> forward, backward(vs.size());
  for (EntityId v : vs) forward.push_back(importance(m, ext, fact, v, cfg).importance);
  for (std::size_t i = vs.size(); i-- > 0;)
    backward[i] = importance(m, ext, fact, vs[i], cfg).importance;
  CHECK(forward == backward);
}

TEST_CASE("the only connecting entity matters more than a bystander") {
  // 0 -r0-> 1 -r0-> 2 is the single route; 3 hangs off the head. The fact
  // (0, r1, 2) is held out of the graph and r1 = r0 o r0.
  std::vector<Triple> ts;
  const EntityId chains = 12;
  for (EntityId c = 0; c < chains; ++c) {
    const EntityId a = 4 + 3 * c;
    ts.push_back({a, 0, a + 1});
    ts.push_back({a + 1, 0, a + 2});
    ts.push_back({a, 1, a + 2});
  }
  ts.push_back({0, 0, 1});
  ts.push_back({1, 0, 2});
  ts.push_back({3, 2, 0});
  KnowledgeGraph g(4 + 3 * chains, 3, ts);
  auto m = trained(g, 300);
  Triple fact{0, 1, 2};
  auto ext = extend_subgraph(g, enclosing_subgraph(g, 0, 2, 2));
  RetrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.01;
  const double via = importance(m, ext, fact, 1, cfg).importance;
  const double off = importance(m, ext, fact, 3, cfg).importance;
  CHECK(via > off);
}
