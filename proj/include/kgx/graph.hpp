#pragma once
// Indexed triple store.
//
// Entities and relations carry dense ids assigned at load time. The graph
// keeps a CSR index of incident triples per entity (both directions) and a
// sorted, de-duplicated undirected neighbor list. It is immutable after
// construction and safe for concurrent reads.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgx {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using EdgeId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

// Bidirectional string <-> dense id mapping.
class Dictionary {
 public:
  std::uint32_t get_or_add(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Vocabulary {
  Dictionary entities;
  Dictionary relations;

  std::string entity_name(EntityId id) const;
  std::string relation_name(RelationId id) const;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Throws invalid_entity / invalid_relation if a triple references an id
  // outside the declared ranges.
  KnowledgeGraph(std::size_t num_entities, std::size_t num_relations,
                 std::vector<Triple> triples);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_triples() const { return triples_.size(); }

  const Triple& triple(EdgeId e) const { return triples_[e]; }
  std::span<const Triple> triples() const { return triples_; }

  // Incident triple ids of v, both directions. A self-loop is listed once.
  std::span<const EdgeId> incident(EntityId v) const;
  std::size_t degree(EntityId v) const { return incident(v).size(); }

  // Distinct undirected neighbors of v, ascending, excluding v itself.
  std::span<const EntityId> neighbors(EntityId v) const;

  bool has_entity(EntityId v) const { return v < num_entities_; }
  bool has_relation(RelationId r) const { return r < num_relations_; }
  void check_entity(EntityId v) const;
  void check_relation(RelationId r) const;

  std::optional<EdgeId> find(const Triple& t) const;
  bool contains(const Triple& t) const { return find(t).has_value(); }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Triple> triples_;
  std::vector<std::size_t> incident_offsets_;
  std::vector<EdgeId> incident_;
  std::vector<std::size_t> neighbor_offsets_;
  std::vector<EntityId> neighbors_;
  std::unordered_map<Triple, EdgeId, TripleHash> lookup_;
};

// Parses a tab-separated triple file. Blank lines and '#' comments are
// skipped, duplicate triples are dropped. When grow is false every name must
// already be in the vocabulary.
std::vector<Triple> read_triples(const std::filesystem::path& path,
                                 Vocabulary& vocab, bool grow = true);

void write_triples(const std::filesystem::path& path,
                   std::span<const Triple> triples, const Vocabulary& vocab);

struct Dataset {
  Vocabulary vocab;
  KnowledgeGraph train;
  std::vector<Triple> test;
};

// Train entities get the lowest ids; test-only names are appended after them.
Dataset load_dataset(const std::filesystem::path& train_path,
                     const std::optional<std::filesystem::path>& test_path);

}  // namespace kgx
