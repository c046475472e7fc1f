#include "kgx/graph.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "kgx/error.hpp"
#include "kgx/random.hpp"

namespace kgx {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_entity: return "invalid-entity";
    case ErrorCode::invalid_relation: return "invalid-relation";
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_selection: return "invalid-selection";
    case ErrorCode::invalid_query: return "invalid-query";
    case ErrorCode::empty_subgraph: return "empty-subgraph";
    case ErrorCode::protected_entity: return "protected-entity";
    case ErrorCode::training_diverged: return "training-diverged";
    case ErrorCode::no_explanation: return "no-explanation";
    case ErrorCode::undefined_metric: return "undefined-metric";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::audit_failure: return "audit-failure";
  }
  return "unknown";
}

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  std::uint64_t k = (std::uint64_t{t.head} << 32) ^ t.tail;
  return static_cast<std::size_t>(mix64(k ^ mix64(t.relation)));
}

std::uint32_t Dictionary::get_or_add(std::string_view name) {
  std::string key(name);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::uint32_t> Dictionary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::entity_name(EntityId id) const {
  return id < entities.size() ? entities.name(id) : std::to_string(id);
}

std::string Vocabulary::relation_name(RelationId id) const {
  return id < relations.size() ? relations.name(id) : std::to_string(id);
}

KnowledgeGraph::KnowledgeGraph(std::size_t num_entities,
                               std::size_t num_relations,
                               std::vector<Triple> triples)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    check_entity(t.head);
    check_entity(t.tail);
    check_relation(t.relation);
  }

  std::vector<std::size_t> counts(num_entities_ + 1, 0);
  for (const auto& t : triples_) {
    ++counts[t.head];
    if (t.tail != t.head) ++counts[t.tail];
  }
  incident_offsets_.assign(num_entities_ + 1, 0);
  for (std::size_t v = 0; v < num_entities_; ++v)
    incident_offsets_[v + 1] = incident_offsets_[v] + counts[v];
  incident_.resize(incident_offsets_.back());
  std::vector<std::size_t> cursor(incident_offsets_.begin(),
                                  incident_offsets_.end() - 1);
  for (EdgeId e = 0; e < triples_.size(); ++e) {
    const auto& t = triples_[e];
    incident_[cursor[t.head]++] = e;
    if (t.tail != t.head) incident_[cursor[t.tail]++] = e;
  }

  neighbor_offsets_.assign(num_entities_ + 1, 0);
  std::vector<EntityId> scratch;
  for (EntityId v = 0; v < num_entities_; ++v) {
    scratch.clear();
    for (EdgeId e : incident(v)) {
      const auto& t = triples_[e];
      EntityId u = t.head == v ? t.tail : t.head;
      if (u != v) scratch.push_back(u);
    }
    std::sort(scratch.begin(), scratch.end());
    scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
    neighbors_.insert(neighbors_.end(), scratch.begin(), scratch.end());
    neighbor_offsets_[v + 1] = neighbors_.size();
  }

  lookup_.reserve(triples_.size());
  for (EdgeId e = 0; e < triples_.size(); ++e) lookup_.emplace(triples_[e], e);
}

std::span<const EdgeId> KnowledgeGraph::incident(EntityId v) const {
  check_entity(v);
  return {incident_.data() + incident_offsets_[v],
          incident_offsets_[v + 1] - incident_offsets_[v]};
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId v) const {
  check_entity(v);
  return {neighbors_.data() + neighbor_offsets_[v],
          neighbor_offsets_[v + 1] - neighbor_offsets_[v]};
}

void KnowledgeGraph::check_entity(EntityId v) const {
  if (v >= num_entities_)
    throw Error(ErrorCode::invalid_entity,
                "entity id " + std::to_string(v) + " out of range");
}

void KnowledgeGraph::check_relation(RelationId r) const {
  if (r >= num_relations_)
    throw Error(ErrorCode::invalid_relation,
                "relation id " + std::to_string(r) + " out of range");
}

std::optional<EdgeId> KnowledgeGraph::find(const Triple& t) const {
  auto it = lookup_.find(t);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos
                                         ? std::string_view::npos
                                         : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::uint32_t lookup_name(Dictionary& dict, std::string_view name, bool grow,
                          const std::string& where, ErrorCode code) {
  if (grow) return dict.get_or_add(name);
  auto id = dict.find(name);
  if (!id)
    throw Error(code, where + ": unknown name '" + std::string(name) + "'");
  return *id;
}

}  // namespace

std::vector<Triple> read_triples(const std::filesystem::path& path,
                                 Vocabulary& vocab, bool grow) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open " + path.string());

  std::vector<Triple> out;
  std::unordered_set<Triple, TripleHash> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty())
      throw Error(ErrorCode::parse_error,
                  where + ": expected head<TAB>relation<TAB>tail");
    Triple t;
    t.head = lookup_name(vocab.entities, fields[0], grow, where,
                         ErrorCode::invalid_entity);
    t.relation = lookup_name(vocab.relations, fields[1], grow, where,
                             ErrorCode::invalid_relation);
    t.tail = lookup_name(vocab.entities, fields[2], grow, where,
                         ErrorCode::invalid_entity);
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

void write_triples(const std::filesystem::path& path,
                   std::span<const Triple> triples, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  for (const auto& t : triples)
    out << vocab.entity_name(t.head) << '\t' << vocab.relation_name(t.relation)
        << '\t' << vocab.entity_name(t.tail) << '\n';
}

Dataset load_dataset(const std::filesystem::path& train_path,
                     const std::optional<std::filesystem::path>& test_path) {
  Dataset ds;
  auto train = read_triples(train_path, ds.vocab, true);
  if (test_path) ds.test = read_triples(*test_path, ds.vocab, true);
  ds.train = KnowledgeGraph(ds.vocab.entities.size(), ds.vocab.relations.size(),
                            std::move(train));
  return ds;
}

}  // namespace kgx
