#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "kgx/error.hpp"
#include "kgx/kge.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgx;

TEST_CASE("score functions on hand-computed rows") {
  std::vector<double> h{1, 0}, r{0, 1}, t{1, 1};
  CHECK(score(ModelKind::transe, h, r, t) == doctest::Approx(0.0));
  std::vector<double> t2{0, 0};
  CHECK(score(ModelKind::transe, h, r, t2) == doctest::Approx(-std::sqrt(2.0)));

  std::vector<double> dh{1, 2}, dr{3, 4}, dt{5, 6};
  CHECK(score(ModelKind::distmult, dh, dr, dt) == doctest::Approx(15.0 + 48.0));

  // RotatE with d = 1: h = 1 + 0j rotated by pi/2 gives j; t = j scores 0.
  std::vector<double> rh{1, 0}, rr{M_PI / 2}, rt{0, 1};
  CHECK(score(ModelKind::rotate, rh, rr, rt) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> rt2{0, 0};
  CHECK(score(ModelKind::rotate, rh, rr, rt2) == doctest::Approx(-1.0));
}

TEST_CASE("analytic score gradients match central differences") {
  for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::rotate}) {
    CAPTURE(to_string(kind));
    auto rep = test::kge_gradient_check(kind, 100, 17 + static_cast<int>(kind));
    CHECK(rep.instances == 100);
    CHECK(rep.worst < 1e-4);
  }
}

TEST_CASE("negative samples replace exactly one slot") {
  Rng rng(3);
  auto g = test::random_graph(rng, 30, 3, 60);
  for (int i = 0; i < 200; ++i) {
    const Triple& pos = g.triple(static_cast<EdgeId>(uniform_index(rng, g.num_triples())));
    for (const auto& neg : negative_sample(g, pos, 4, rng)) {
      CHECK(neg.relation == pos.relation);
      const int changed = (neg.head != pos.head) + (neg.tail != pos.tail);
      CHECK(changed == 1);
    }
  }
  std::vector<EntityId> only{5};
  CHECK(negative_sample(only, {5, 0, 5}, 3, rng, Corruption::tail).empty());
}

TEST_CASE("pretraining lowers the loss and is seed-deterministic") {
  Rng rng(4);
  auto g = test::random_graph(rng, 40, 3, 120);
  for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::rotate}) {
    TrainConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 30;
    cfg.margin = default_margin(kind);
    cfg.learning_rate = 0.05;
    auto a = pretrain(g, kind, cfg);
    auto b = pretrain(g, kind, cfg);
    CHECK(same_bytes(a.model, b.model));
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  }
}

TEST_CASE("zero epochs return the initialization") {
  Rng rng(5);
  auto g = test::random_graph(rng, 10, 2, 20);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.dim = 8;
  auto r = pretrain(g, ModelKind::transe, cfg);
  auto init = initialize_model(ModelKind::transe, 10, 2, 8, cfg.margin, cfg.seed);
  CHECK(same_bytes(r.model, init));
  CHECK(r.epoch_loss.empty());
}

TEST_CASE("rotate relation rows stay unit-modulus phases") {
  Rng rng(6);
  auto g = test::random_graph(rng, 20, 2, 40);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 5;
  cfg.learning_rate = 0.5;
  auto r = pretrain(g, ModelKind::rotate, cfg);
  for (double theta : r.model.relation_table()) {
    CHECK(theta >= 0.0);
    CHECK(theta < 2 * M_PI);
  }
}

TEST_CASE("tail rank matches a sort oracle and tail_scores is bit-identical") {
  Rng rng(7);
  auto m = initialize_model(ModelKind::distmult, 25, 3, 8, 1.0, 9);
  std::vector<double> all(25);
  for (int trial = 0; trial < 50; ++trial) {
    EntityId h = static_cast<EntityId>(uniform_index(rng, 25));
    RelationId r = static_cast<RelationId>(uniform_index(rng, 3));
    EntityId t = static_cast<EntityId>(uniform_index(rng, 25));
    tail_scores(m, h, r, all);
    std::vector<EntityId> order(25);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](EntityId a, EntityId b) { return all[a] > all[b]; });
    auto pos = std::find(order.begin(), order.end(), t) - order.begin();
    CHECK(tail_rank(m, h, r, t) == static_cast<std::size_t>(pos) + 1);
    for (EntityId v = 0; v < 25; ++v) CHECK(all[v] == score(m, h, r, v));
  }
  std::vector<EntityId> cands{1, 2};
  CHECK_THROWS_AS(tail_rank(m, 0, 0, 3, cands), Error);
}

TEST_CASE("model files round-trip bit-exactly") {
  for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::rotate}) {
    auto m = initialize_model(kind, 7, 2, 5, 3.5, 1);
    m.vocab.entities.get_or_add("a");
    m.vocab.relations.get_or_add("r");
    std::stringstream buf;
    write_model(buf, m);
    auto back = read_model(buf);
    CHECK(same_bytes(m, back));
    CHECK(back.vocab.entities.names() == m.vocab.entities.names());
  }
  std::stringstream junk("not a model");
  CHECK_THROWS_AS(read_model(junk), Error);
}
