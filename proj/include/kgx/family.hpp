#pragma once
// Synthetic kinship knowledge graph at the scale of the family benchmark
// (about 3k people, 12 kinship relations).
//
// Three-generation families are grown person by person: a founding couple,
// their children, the children's spouses (from outside the family) and the
// grandchildren. Every kinship fact implied by the genealogy is derived, then
// a subsample is split into train and test so that every person appears in
// train and every test pair is within 2 * radius hops in train.

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "kgx/graph.hpp"

namespace kgx {

struct FamilyConfig {
  std::size_t entities = 3007;
  std::size_t train = 5868;
  std::size_t test = 2835;
  std::size_t radius = 2;
  std::uint64_t seed = 7;
};

// Relation names in id order.
inline constexpr const char* kKinshipRelations[] = {
    "brother", "sister", "father", "mother", "son",    "daughter",
    "husband", "wife",   "uncle",  "aunt",   "nephew", "niece"};

// All kinship facts of a generated population, before sampling.
struct Population {
  std::size_t people = 0;
  std::vector<Triple> facts;  // sorted
};

Population generate_population(std::size_t people, std::uint64_t seed);

// Sampled train/test split. Throws invalid_input when the population cannot
// supply the requested number of training facts.
Dataset generate_family(const FamilyConfig& cfg);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace kgx
