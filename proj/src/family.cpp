#include "kgx/family.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "kgx/error.hpp"
#include "kgx/random.hpp"
#include "kgx/subgraph.hpp"

namespace kgx {

namespace {

enum Rel : RelationId {
  brother, sister, father, mother, son, daughter,
  husband, wife, uncle, aunt, nephew, niece
};

constexpr int kNone = -1;

struct Person {
  bool male = false;
  int father = kNone;
  int mother = kNone;
  int spouse = kNone;
};

class Builder {
 public:
  Builder(std::size_t target, Rng& rng) : target_(target), rng_(rng) {}

  bool full() const { return people.size() >= target_; }
  std::size_t left() const { return target_ - people.size(); }

  int add(bool male, int dad = kNone, int mom = kNone) {
    people.push_back({male, dad, mom, kNone});
    return static_cast<int>(people.size() - 1);
  }

  void marry(int a, int b) {
    people[a].spouse = b;
    people[b].spouse = a;
  }

  bool coin(double p) { return uniform_real(rng_, 0.0, 1.0) < p; }
  int between(int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(hi - lo + 1)));
  }

  // One founding couple with children and grandchildren, truncated when the
  // population reaches its target.
  void grow_family() {
    if (left() == 1) {
      // Too small for a couple: attach a child to the last couple instead.
      int mom = last_mother_;
      add(coin(0.5), people[mom].spouse, mom);
      return;
    }
    const int dad = add(true), mom = add(false);
    marry(dad, mom);
    last_mother_ = mom;
    std::vector<int> children;
    for (int c = between(2, 4); c > 0 && !full(); --c)
      children.push_back(add(coin(0.5), dad, mom));
    for (int child : children) {
      if (full() || left() < 2 || !coin(0.8)) continue;
      const bool male = people[child].male;
      const int partner = add(!male);
      marry(child, partner);
      const int d = male ? child : partner, m = male ? partner : child;
      last_mother_ = m;
      for (int g = between(1, 3); g > 0 && !full(); --g) add(coin(0.5), d, m);
    }
  }

  std::vector<Person> people;

 private:
  std::size_t target_;
  Rng& rng_;
  int last_mother_ = kNone;
};

std::vector<Triple> kinship_closure(const std::vector<Person>& people) {
  const int n = static_cast<int>(people.size());
  std::vector<std::vector<int>> children(n);
  for (int i = 0; i < n; ++i) {
    if (people[i].father != kNone) children[people[i].father].push_back(i);
    if (people[i].mother != kNone) children[people[i].mother].push_back(i);
  }
  std::set<Triple> out;
  auto add = [&](int x, Rel r, int y) {
    out.insert({static_cast<EntityId>(x), r, static_cast<EntityId>(y)});
  };
  auto siblings = [&](int x) {
    std::set<int> s;
    for (int parent : {people[x].father, people[x].mother})
      if (parent != kNone)
        for (int c : children[parent])
          if (c != x) s.insert(c);
    return s;
  };
  for (int x = 0; x < n; ++x) {
    const Person& p = people[x];
    if (p.spouse != kNone) add(x, p.male ? husband : wife, p.spouse);
    for (int c : children[x]) {
      add(x, p.male ? father : mother, c);
      add(c, people[c].male ? son : daughter, x);
    }
    for (int s : siblings(x)) add(x, p.male ? brother : sister, s);
  }
  // Uncles and aunts: siblings of a parent and their spouses.
  for (int y = 0; y < n; ++y) {
    std::set<int> elders;
    for (int parent : {people[y].father, people[y].mother}) {
      if (parent == kNone) continue;
      for (int s : siblings(parent)) {
        elders.insert(s);
        if (people[s].spouse != kNone) elders.insert(people[s].spouse);
      }
    }
    for (int x : elders) {
      add(x, people[x].male ? uncle : aunt, y);
      add(y, people[y].male ? nephew : niece, x);
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace

Population generate_population(std::size_t people, std::uint64_t seed) {
  if (people < 2) throw Error(ErrorCode::invalid_input, "a population needs at least 2 people");
  Rng rng(seed);
  Builder b(people, rng);
  while (!b.full()) b.grow_family();
  return {b.people.size(), kinship_closure(b.people)};
}

Dataset generate_family(const FamilyConfig& cfg) {
  auto pop = generate_population(cfg.entities, cfg.seed);
  Rng rng(derive_seed(cfg.seed, {0x73706c6974}));
  auto facts = pop.facts;
  std::shuffle(facts.begin(), facts.end(), rng);

  // Guarantee every person appears in train: the first shuffled fact that
  // touches an uncovered person is taken.
  std::vector<char> covered(pop.people, 0), taken(facts.size(), 0);
  std::vector<Triple> train;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const auto& t = facts[i];
    if (covered[t.head] && covered[t.tail]) continue;
    covered[t.head] = covered[t.tail] = 1;
    taken[i] = 1;
    train.push_back(t);
  }
  if (train.size() > cfg.train)
    throw Error(ErrorCode::invalid_input,
                "covering every person needs " + std::to_string(train.size()) +
                    " training facts, more than the requested " + std::to_string(cfg.train));
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < facts.size(); ++i)
    if (!taken[i]) rest.push_back(i);
  std::size_t cursor = 0;
  while (train.size() < cfg.train && cursor < rest.size()) {
    taken[rest[cursor]] = 1;
    train.push_back(facts[rest[cursor++]]);
  }
  if (train.size() < cfg.train)
    throw Error(ErrorCode::invalid_input, "population has too few facts for the training split");
  std::sort(train.begin(), train.end());

  Dataset data;
  char name[32];
  for (std::size_t i = 0; i < pop.people; ++i) {
    std::snprintf(name, sizeof name, "p%04zu", i);
    data.vocab.entities.get_or_add(name);
  }
  for (const char* r : kKinshipRelations) data.vocab.relations.get_or_add(r);
  data.train = KnowledgeGraph(pop.people, std::size(kKinshipRelations), train);

  // Test facts must be explainable: endpoints within 2 * radius hops.
  for (; cursor < rest.size() && data.test.size() < cfg.test; ++cursor) {
    const auto& t = facts[rest[cursor]];
    auto near = k_hop_neighbors(data.train, t.head, 2 * cfg.radius);
    if (std::binary_search(near.begin(), near.end(), t.tail)) data.test.push_back(t);
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_triples(dir / "train.tsv", data.train.triples(), data.vocab);
  write_triples(dir / "test.tsv", data.test, data.vocab);
}

}  // namespace kgx
