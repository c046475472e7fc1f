#include <doctest.h>

#include <set>

#include <json.hpp>

#include "kgx/metrics.hpp"
#include "kgx/random.hpp"

using namespace kgx;
using Ranks = std::vector<std::size_t>;

TEST_CASE("worked examples") {
  CHECK(hits_at_n(Ranks{1, 3, 12}, 3) == doctest::Approx(2.0 / 3.0));
  CHECK(hits_at_n(Ranks{1, 1, 1}, 1) == 1.0);
  CHECK(recall_at_n(Ranks{1, 1, 5}, Ranks{1, 4, 1}, 1) == 0.5);
  CHECK(f1_score(0.5, 2.0 / 3.0) == doctest::Approx(4.0 / 7.0));
  CHECK(f1_score(1.0, 1.0) == 1.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);
  // Recall 1/2 and Hits_exp 2/3 from one paired set.
  CHECK(f1_at_n(Ranks{1, 1, 5}, Ranks{1, 4, 1}, 1) == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("undefined and invalid inputs") {
  CHECK_THROWS_AS(hits_at_n(Ranks{}, 1), Error);
  try {
    recall_at_n(Ranks{5, 6}, Ranks{1, 1}, 1);
    FAIL("expected undefined_metric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::undefined_metric);
  }
  CHECK_THROWS_AS(hits_at_n(Ranks{0}, 1), Error);
  CHECK_THROWS_AS(recall_at_n(Ranks{1}, Ranks{1, 2}, 1), Error);
  auto v = guarded([] { return hits_at_n(Ranks{}, 1); });
  CHECK_FALSE(v.defined());
  CHECK_FALSE(v.undefined_reason.empty());
}

TEST_CASE("metrics match counting oracles on random rank sets") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    Ranks orig(n), expl(n);
    for (auto& r : orig) r = 1 + uniform_index(rng, 15);
    for (auto& r : expl) r = 1 + uniform_index(rng, 15);
    double prev_hits = 0.0;
    for (std::size_t cut : {1u, 3u, 10u}) {
      std::set<std::size_t> top_o, top_e;
      for (std::size_t i = 0; i < n; ++i) {
        if (orig[i] <= cut) top_o.insert(i);
        if (expl[i] <= cut) top_e.insert(i);
      }
      const double h = static_cast<double>(top_e.size()) / static_cast<double>(n);
      CHECK(hits_at_n(expl, cut) == h);
      CHECK(h >= prev_hits);
      prev_hits = h;
      if (top_o.empty()) {
        CHECK_THROWS_AS(recall_at_n(orig, expl, cut), Error);
        continue;
      }
      std::size_t both = 0;
      for (auto i : top_o) both += top_e.count(i);
      const double r = static_cast<double>(both) / static_cast<double>(top_o.size());
      CHECK(recall_at_n(orig, expl, cut) == r);
      const double f = f1_at_n(orig, expl, cut);
      CHECK(f == (r + h == 0 ? 0.0 : 2 * r * h / (r + h)));
      CHECK(f <= std::max(r, h) * (1 + 1e-15));
      CHECK((f == 0.0) == (r * h == 0.0));
      CHECK(recall_at_n(orig, orig, cut) == 1.0);
    }
  }
}

TEST_CASE("evaluation bound") {
  CHECK(evaluation_bound(0, 2, 5) == 0);
  CHECK(evaluation_bound(1, 2, 5) == 0);
  CHECK(evaluation_bound(2, 2, 5) == 5);
  CHECK(evaluation_bound(4, 2, 5) == 25);
}

TEST_CASE("audit flags and names the violating fact") {
  std::vector<Explanation> xs(2);
  xs[0].hops_searched = 2;
  xs[0].max_degree = 3;
  xs[0].evaluations = 3;
  xs[1].hops_searched = 2;
  xs[1].max_degree = 3;
  xs[1].evaluations = 4;
  auto rec = complexity_audit(xs, 2, false);
  CHECK(rec.violations == 1);
  CHECK(rec.max_evaluations == 4);
  CHECK(rec.entries[1].violated);
  try {
    complexity_audit(xs, 2, true);
    FAIL("expected audit_failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::audit_failure);
    CHECK(std::string(e.what()).find("fact 1") != std::string::npos);
  }
}

TEST_CASE("report keeps undefined markers and stable keys") {
  Report r;
  r.method = "greedy";
  FactRecord a;
  a.teacher_rank = 1;
  a.original_rank = 4;
  a.explained_rank = 2;
  a.edges = 3;
  r.appendix.push_back(a);
  FactRecord b;
  b.index = 1;
  b.teacher_rank = 2;
  b.original_rank = 1;
  b.status = "no-explanation";
  r.appendix.push_back(b);
  summarize(r);
  CHECK(r.paired == 1);
  CHECK_FALSE(r.recall[0].defined());
  CHECK(r.recall[2].defined());
  CHECK(*r.avg_edges.value == 3.0);

  Vocabulary vocab;
  vocab.entities.get_or_add("x");
  vocab.relations.get_or_add("r");
  auto j = nlohmann::json::parse(report_json(r, vocab));
  for (const char* key : {"hits", "recall", "f1"})
    for (const char* n : {"1", "3", "10"}) CHECK(j[key].contains(n));
  CHECK(j["recall"]["1"].is_string());
  CHECK(j["undefined"].contains("recall@1"));
  CHECK(j["per_fact"].size() == 2);
}
