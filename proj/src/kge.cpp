#include "kgx/kge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "kgx/binary_io.hpp"
#include "kgx/error.hpp"

namespace kgx {

namespace {

constexpr std::uint32_t kModelMagic = 0x4d58474b;  // "KGXM"
constexpr std::uint32_t kModelVersion = 1;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::transe: return "transe";
    case ModelKind::distmult: return "distmult";
    case ModelKind::rotate: return "rotate";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "transe") return ModelKind::transe;
  if (lower == "distmult") return ModelKind::distmult;
  if (lower == "rotate") return ModelKind::rotate;
  throw Error(ErrorCode::invalid_input, "unknown model kind '" + lower + "'");
}

double default_margin(ModelKind kind) {
  return kind == ModelKind::distmult ? 1.0 : 6.0;
}

EmbeddingModel::EmbeddingModel(ModelKind kind, std::size_t num_entities,
                               std::size_t num_relations, std::size_t dim,
                               double margin)
    : kind_(kind),
      num_entities_(num_entities),
      num_relations_(num_relations),
      dim_(dim),
      margin_(margin),
      entities_(num_entities * (kind == ModelKind::rotate ? 2 * dim : dim), 0.0),
      relations_(num_relations * dim, 0.0) {
  if (dim == 0) throw Error(ErrorCode::invalid_input, "dimension must be positive");
}

std::span<const double> EmbeddingModel::entity(EntityId v) const {
  check_entity(v);
  return std::span<const double>(entities_).subspan(v * entity_width(),
                                                    entity_width());
}

std::span<double> EmbeddingModel::entity(EntityId v) {
  check_entity(v);
  return std::span<double>(entities_).subspan(v * entity_width(), entity_width());
}

std::span<const double> EmbeddingModel::relation(RelationId r) const {
  check_relation(r);
  return std::span<const double>(relations_).subspan(r * dim_, dim_);
}

std::span<double> EmbeddingModel::relation(RelationId r) {
  check_relation(r);
  return std::span<double>(relations_).subspan(r * dim_, dim_);
}

void EmbeddingModel::check_entity(EntityId v) const {
  if (v >= num_entities_)
    throw Error(ErrorCode::invalid_entity,
                "entity id " + std::to_string(v) + " out of range");
}

void EmbeddingModel::check_relation(RelationId r) const {
  if (r >= num_relations_)
    throw Error(ErrorCode::invalid_relation,
                "relation id " + std::to_string(r) + " out of range");
}

bool same_bytes(const EmbeddingModel& a, const EmbeddingModel& b) {
  auto eq = [](std::span<const double> x, std::span<const double> y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return a.kind() == b.kind() && a.dim() == b.dim() &&
         a.num_entities() == b.num_entities() &&
         a.num_relations() == b.num_relations() &&
         std::bit_cast<std::uint64_t>(a.margin()) == std::bit_cast<std::uint64_t>(b.margin()) &&
         eq(a.entity_table(), b.entity_table()) &&
         eq(a.relation_table(), b.relation_table()) &&
         a.vocab.entities.names() == b.vocab.entities.names() &&
         a.vocab.relations.names() == b.vocab.relations.names();
}

double score(ModelKind kind, std::span<const double> h,
             std::span<const double> r, std::span<const double> t) {
  switch (kind) {
    case ModelKind::transe: {
      double sq = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        double d = h[i] + r[i] - t[i];
        sq += d * d;
      }
      return -std::sqrt(sq);
    }
    case ModelKind::distmult: {
      double s = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * r[i] * t[i];
      return s;
    }
    case ModelKind::rotate: {
      const std::size_t d = r.size();
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double c = std::cos(r[i]), sn = std::sin(r[i]);
        double re = h[i] * c - h[d + i] * sn - t[i];
        double im = h[i] * sn + h[d + i] * c - t[d + i];
        s += std::sqrt(re * re + im * im);
      }
      return -s;
    }
  }
  return 0.0;
}

double score(const EmbeddingModel& m, EntityId h, RelationId r, EntityId t) {
  return score(m.kind(), m.entity(h), m.relation(r), m.entity(t));
}

void add_score_gradient(ModelKind kind, std::span<const double> h,
                        std::span<const double> r, std::span<const double> t,
                        double scale, std::span<double> grad_h,
                        std::span<double> grad_r, std::span<double> grad_t) {
  switch (kind) {
    case ModelKind::transe: {
      double sq = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        double d = h[i] + r[i] - t[i];
        sq += d * d;
      }
      double norm = std::sqrt(sq);
      if (norm == 0.0) return;
      for (std::size_t i = 0; i < h.size(); ++i) {
        double g = -scale * (h[i] + r[i] - t[i]) / norm;
        grad_h[i] += g;
        grad_r[i] += g;
        grad_t[i] -= g;
      }
      return;
    }
    case ModelKind::distmult: {
      for (std::size_t i = 0; i < h.size(); ++i) {
        grad_h[i] += scale * r[i] * t[i];
        grad_r[i] += scale * h[i] * t[i];
        grad_t[i] += scale * h[i] * r[i];
      }
      return;
    }
    case ModelKind::rotate: {
      const std::size_t d = r.size();
      for (std::size_t i = 0; i < d; ++i) {
        double c = std::cos(r[i]), sn = std::sin(r[i]);
        double hr = h[i], hi = h[d + i];
        double re = hr * c - hi * sn - t[i];
        double im = hr * sn + hi * c - t[d + i];
        double mod = std::sqrt(re * re + im * im);
        if (mod == 0.0) continue;
        double gre = -scale * re / mod;  // d(phi)/d(re)
        double gim = -scale * im / mod;
        grad_h[i] += gre * c + gim * sn;
        grad_h[d + i] += -gre * sn + gim * c;
        grad_t[i] -= gre;
        grad_t[d + i] -= gim;
        grad_r[i] += gre * (-hr * sn - hi * c) + gim * (hr * c - hi * sn);
      }
      return;
    }
  }
}

ScoreGradient score_gradient(const EmbeddingModel& m, const Triple& x) {
  ScoreGradient g{std::vector<double>(m.entity_width(), 0.0),
                  std::vector<double>(m.relation_width(), 0.0),
                  std::vector<double>(m.entity_width(), 0.0)};
  add_score_gradient(m.kind(), m.entity(x.head), m.relation(x.relation),
                     m.entity(x.tail), 1.0, g.head, g.relation, g.tail);
  return g;
}

std::vector<Triple> negative_sample(std::span<const EntityId> pool,
                                    const Triple& positive, std::size_t n,
                                    Rng& rng, Corruption mode) {
  std::vector<Triple> out;
  if (n == 0 || pool.empty()) return out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool corrupt_head = mode == Corruption::head_or_tail &&
                        std::bernoulli_distribution(0.5)(rng);
    EntityId original = corrupt_head ? positive.head : positive.tail;
    bool alternative = std::any_of(pool.begin(), pool.end(),
                                   [&](EntityId v) { return v != original; });
    if (!alternative) return {};
    EntityId pick;
    do {
      pick = pool[uniform_index(rng, pool.size())];
    } while (pick == original);
    Triple neg = positive;
    (corrupt_head ? neg.head : neg.tail) = pick;
    out.push_back(neg);
  }
  return out;
}

std::vector<Triple> negative_sample(const KnowledgeGraph& g,
                                    const Triple& positive, std::size_t n,
                                    Rng& rng, Corruption mode) {
  std::vector<Triple> out;
  if (n == 0 || g.num_entities() < 2) return out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool corrupt_head = mode == Corruption::head_or_tail &&
                        std::bernoulli_distribution(0.5)(rng);
    EntityId original = corrupt_head ? positive.head : positive.tail;
    // Uniform over the other |V| - 1 entities.
    auto pick = static_cast<EntityId>(uniform_index(rng, g.num_entities() - 1));
    if (pick >= original) ++pick;
    Triple neg = positive;
    (corrupt_head ? neg.head : neg.tail) = pick;
    out.push_back(neg);
  }
  return out;
}

double wrap_phase(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

EmbeddingModel initialize_model(ModelKind kind, std::size_t num_entities,
                                std::size_t num_relations, std::size_t dim,
                                double margin, std::uint64_t seed) {
  EmbeddingModel m(kind, num_entities, num_relations, dim, margin);
  Rng rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  for (double& x : m.entity_table()) x = uniform_real(rng, -bound, bound);
  for (double& x : m.relation_table())
    x = kind == ModelKind::rotate ? uniform_real(rng, 0.0, kTwoPi)
                                  : uniform_real(rng, -bound, bound);
  return m;
}

namespace {

// Dense gradient buffers with a record of which rows were touched, so a
// batch update only visits the rows it changed.
class SparseGrad {
 public:
  SparseGrad(std::size_t rows, std::size_t width)
      : width_(width), data_(rows * width, 0.0), touched_(rows, 0) {}

  std::span<double> row(std::size_t i) {
    if (!touched_[i]) {
      touched_[i] = 1;
      order_.push_back(i);
    }
    return std::span<double>(data_).subspan(i * width_, width_);
  }

  template <typename Fn>
  void drain(Fn&& apply) {
    std::sort(order_.begin(), order_.end());
    for (auto i : order_) {
      auto g = std::span<double>(data_).subspan(i * width_, width_);
      apply(i, g);
      std::fill(g.begin(), g.end(), 0.0);
      touched_[i] = 0;
    }
    order_.clear();
  }

 private:
  std::size_t width_;
  std::vector<double> data_;
  std::vector<char> touched_;
  std::vector<std::size_t> order_;
};

}  // namespace

TrainResult pretrain(const KnowledgeGraph& g, ModelKind kind,
                     const TrainConfig& cfg) {
  if (g.num_triples() == 0)
    throw Error(ErrorCode::invalid_input, "cannot pretrain on an empty graph");
  if (cfg.batch_size == 0 || cfg.dim == 0)
    throw Error(ErrorCode::invalid_input, "batch size and dim must be positive");

  TrainResult result;
  result.model = initialize_model(kind, g.num_entities(), g.num_relations(),
                                  cfg.dim, cfg.margin, cfg.seed);
  auto& m = result.model;
  Rng rng(derive_seed(cfg.seed, {1}));

  SparseGrad ent_grad(m.num_entities(), m.entity_width());
  SparseGrad rel_grad(m.num_relations(), m.relation_width());
  std::vector<EdgeId> order(g.num_triples());
  std::iota(order.begin(), order.end(), 0);

  auto apply = [&] {
    ent_grad.drain([&](std::size_t v, std::span<const double> grad) {
      auto row = m.entity(static_cast<EntityId>(v));
      for (std::size_t i = 0; i < row.size(); ++i)
        row[i] -= cfg.learning_rate * grad[i];
    });
    rel_grad.drain([&](std::size_t r, std::span<const double> grad) {
      auto row = m.relation(static_cast<RelationId>(r));
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] -= cfg.learning_rate * grad[i];
        if (kind == ModelKind::rotate) row[i] = wrap_phase(row[i]);
      }
    });
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t b = start; b < stop; ++b) {
        const Triple& pos = g.triple(order[b]);
        auto negs = negative_sample(g, pos, cfg.negatives, rng);
        if (negs.empty()) continue;
        const double w = 1.0 / static_cast<double>(negs.size());
        double pos_score = score(m, pos);
        for (const auto& neg : negs) {
          double loss = cfg.margin - pos_score + score(m, neg);
          if (loss <= 0.0) continue;
          total += w * loss;
          // d(loss)/d(theta) = -d(phi_pos) + d(phi_neg)
          add_score_gradient(kind, m.entity(pos.head), m.relation(pos.relation),
                             m.entity(pos.tail), -w, ent_grad.row(pos.head),
                             rel_grad.row(pos.relation), ent_grad.row(pos.tail));
          add_score_gradient(kind, m.entity(neg.head), m.relation(neg.relation),
                             m.entity(neg.tail), w, ent_grad.row(neg.head),
                             rel_grad.row(neg.relation), ent_grad.row(neg.tail));
        }
      }
      apply();
    }
    double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean))
      throw Error(ErrorCode::training_diverged,
                  "training diverged at epoch " + std::to_string(epoch + 1));
    result.epoch_loss.push_back(mean);
  }
  return result;
}

std::size_t tail_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t, std::span<const EntityId> candidates) {
  if (std::find(candidates.begin(), candidates.end(), t) == candidates.end())
    throw Error(ErrorCode::invalid_query, "true tail is not among the candidates");
  const double target = score(m, h, r, t);
  std::size_t rank = 0;
  for (EntityId v : candidates)
    if (score(m, h, r, v) >= target) ++rank;
  return rank;
}

std::size_t head_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t, std::span<const EntityId> candidates) {
  if (std::find(candidates.begin(), candidates.end(), h) == candidates.end())
    throw Error(ErrorCode::invalid_query, "true head is not among the candidates");
  const double target = score(m, h, r, t);
  std::size_t rank = 0;
  for (EntityId v : candidates)
    if (score(m, v, r, t) >= target) ++rank;
  return rank;
}

void tail_scores(const EmbeddingModel& m, EntityId h, RelationId r,
                 std::span<double> out) {
  if (out.size() != m.num_entities())
    throw Error(ErrorCode::shape_mismatch, "score buffer size mismatch");
  auto eh = m.entity(h);
  auto er = m.relation(r);
  const std::size_t d = m.dim();
  const std::size_t w = m.entity_width();
  auto table = m.entity_table();
  // The query half of each expression is computed once, in the same
  // operation order score() uses.
  std::vector<double> q(w);
  switch (m.kind()) {
    case ModelKind::transe:
      for (std::size_t i = 0; i < d; ++i) q[i] = eh[i] + er[i];
      for (std::size_t v = 0; v < out.size(); ++v) {
        const double* et = table.data() + v * w;
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          double x = q[i] - et[i];
          sq += x * x;
        }
        out[v] = -std::sqrt(sq);
      }
      return;
    case ModelKind::distmult:
      for (std::size_t i = 0; i < d; ++i) q[i] = eh[i] * er[i];
      for (std::size_t v = 0; v < out.size(); ++v) {
        const double* et = table.data() + v * w;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += q[i] * et[i];
        out[v] = s;
      }
      return;
    case ModelKind::rotate:
      for (std::size_t i = 0; i < d; ++i) {
        double c = std::cos(er[i]), sn = std::sin(er[i]);
        q[i] = eh[i] * c - eh[d + i] * sn;
        q[d + i] = eh[i] * sn + eh[d + i] * c;
      }
      for (std::size_t v = 0; v < out.size(); ++v) {
        const double* et = table.data() + v * w;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          double re = q[i] - et[i];
          double im = q[d + i] - et[d + i];
          s += std::sqrt(re * re + im * im);
        }
        out[v] = -s;
      }
      return;
  }
}

std::size_t tail_rank(const EmbeddingModel& m, EntityId h, RelationId r,
                      EntityId t) {
  m.check_entity(t);
  std::vector<double> scores(m.num_entities());
  tail_scores(m, h, r, scores);
  const double target = scores[t];
  return static_cast<std::size_t>(
      std::count_if(scores.begin(), scores.end(),
                     [&](double s) { return s >= target; }));
}

double hits_at_1_on(const EmbeddingModel& m, std::span<const Triple> facts) {
  if (facts.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& f : facts)
    if (tail_rank(m, f.head, f.relation, f.tail) == 1) ++hits;
  return static_cast<double>(hits) / static_cast<double>(facts.size());
}

void write_model(std::ostream& out, const EmbeddingModel& m) {
  io::write_le(out, kModelMagic);
  io::write_le(out, kModelVersion);
  io::write_le(out, static_cast<std::uint32_t>(m.kind()));
  io::write_le(out, static_cast<std::uint64_t>(m.num_entities()));
  io::write_le(out, static_cast<std::uint64_t>(m.num_relations()));
  io::write_le(out, static_cast<std::uint64_t>(m.dim()));
  io::write_le(out, m.margin());
  io::write_doubles(out, m.entity_table());
  io::write_doubles(out, m.relation_table());
  io::write_le(out, static_cast<std::uint64_t>(m.vocab.entities.size()));
  for (const auto& s : m.vocab.entities.names()) io::write_string(out, s);
  io::write_le(out, static_cast<std::uint64_t>(m.vocab.relations.size()));
  for (const auto& s : m.vocab.relations.names()) io::write_string(out, s);
}

EmbeddingModel read_model(std::istream& in) {
  if (io::read_le<std::uint32_t>(in) != kModelMagic)
    throw Error(ErrorCode::parse_error, "not a model file (bad magic)");
  auto version = io::read_le<std::uint32_t>(in);
  if (version != kModelVersion)
    throw Error(ErrorCode::parse_error,
                "unsupported model version " + std::to_string(version));
  auto kind_raw = io::read_le<std::uint32_t>(in);
  if (kind_raw > 2) throw Error(ErrorCode::parse_error, "unknown model kind");
  auto kind = static_cast<ModelKind>(kind_raw);
  auto ne = io::read_le<std::uint64_t>(in);
  auto nr = io::read_le<std::uint64_t>(in);
  auto dim = io::read_le<std::uint64_t>(in);
  auto margin = io::read_le<double>(in);
  EmbeddingModel m(kind, ne, nr, dim, margin);
  io::read_doubles(in, m.entity_table());
  io::read_doubles(in, m.relation_table());
  auto n_ent_names = io::read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_ent_names; ++i)
    m.vocab.entities.get_or_add(io::read_string(in));
  auto n_rel_names = io::read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_rel_names; ++i)
    m.vocab.relations.get_or_add(io::read_string(in));
  return m;
}

void save_model(const std::filesystem::path& path, const EmbeddingModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  write_model(out, m);
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return read_model(in);
}

}  // namespace kgx
