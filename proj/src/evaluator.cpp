#include "kgx/evaluator.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "kgx/binary_io.hpp"
#include "kgx/error.hpp"

namespace kgx {

namespace {

constexpr std::uint32_t kMagic = 0x4558474b;  // "KGXE"
constexpr std::uint32_t kVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y = A x, A is rows x cols row-major.
void matvec(const double* a, const double* x, double* y, std::size_t rows,
            std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(a + r * cols, x, cols);
}

// y += A^T x.
void matvec_t_add(const double* a, const double* x, double* y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

// A += x y^T.
void outer_add(double* a, const double* x, const double* y, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += xr * y[c];
  }
}

void check_input(const EvaluatorModel& e, const EvaluatorInput& in,
                 std::span<const double> features) {
  const auto& s = e.shape();
  const std::size_t n = in.entities.size();
  if (features.size() != n * s.input_width)
    throw Error(ErrorCode::shape_mismatch,
                "feature matrix has " + std::to_string(features.size()) +
                    " values, expected " + std::to_string(n) + " x " +
                    std::to_string(s.input_width));
  if (in.head_hops.size() != n || in.tail_hops.size() != n)
    throw Error(ErrorCode::shape_mismatch, "hop labels do not cover the subgraph");
  const std::size_t labels = e.layout().hop_labels();
  for (std::size_t i = 0; i < n; ++i)
    if (in.head_hops[i] >= labels || in.tail_hops[i] >= labels)
      throw Error(ErrorCode::shape_mismatch, "hop label out of range");
  for (const auto& m : in.messages)
    if (m.dst >= n || m.src >= n || m.relation >= 2 * s.num_relations)
      throw Error(ErrorCode::shape_mismatch, "message index out of range");
  if (in.query_relation >= s.num_relations)
    throw Error(ErrorCode::shape_mismatch,
                "query relation " + std::to_string(in.query_relation) +
                    " outside the evaluator's relation range");
}

}  // namespace

const char* to_string(InputFeatures f) {
  switch (f) {
    case InputFeatures::embeddings: return "embeddings";
    case InputFeatures::embeddings_and_hops: return "embeddings+hops";
  }
  return "?";
}

InputFeatures parse_input_features(std::string_view name) {
  if (name == "embeddings") return InputFeatures::embeddings;
  if (name == "embeddings+hops") return InputFeatures::embeddings_and_hops;
  throw Error(ErrorCode::invalid_input,
              "unknown feature mode '" + std::string(name) + "'");
}

ParameterLayout::ParameterLayout(const EvaluatorShape& shape) : shape_(shape) {
  const std::size_t d = shape.dim;
  const std::size_t q = 2 * shape.num_relations;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    std::size_t off = at;
    at += n;
    return off;
  };
  projection_ = take(d * shape.input_width);
  head_hops_ = take(hop_labels() * d);
  tail_hops_ = take(hop_labels() * d);
  transforms_ = take(shape.layers * q * d * d);
  relations_ = take(shape.layers * q * d);
  attention_ = take(3 * d);
  readout_weight_ = take(d * d);
  readout_bias_ = take(d);
  score_weights_ = take(shape.num_relations * d);
  score_biases_ = take(shape.num_relations);
  total_ = at;
}

std::size_t ParameterLayout::transform(std::size_t l, std::size_t q) const {
  const std::size_t d = shape_.dim;
  return transforms_ + (l * 2 * shape_.num_relations + q) * d * d;
}

std::size_t ParameterLayout::relation(std::size_t l, std::size_t q) const {
  return relations_ + (l * 2 * shape_.num_relations + q) * shape_.dim;
}

std::size_t ParameterLayout::score_weight(std::size_t r) const {
  return score_weights_ + r * shape_.dim;
}

std::size_t ParameterLayout::score_bias(std::size_t r) const {
  return score_biases_ + r;
}

std::vector<ParameterLayout::Block> ParameterLayout::blocks() const {
  return {
      {"input_projection", projection_, head_hops_ - projection_},
      {"head_hop_labels", head_hops_, tail_hops_ - head_hops_},
      {"tail_hop_labels", tail_hops_, transforms_ - tail_hops_},
      {"relation_transforms", transforms_, relations_ - transforms_},
      {"relation_embeddings", relations_, attention_ - relations_},
      {"attention", attention_, readout_weight_ - attention_},
      {"readout_weight", readout_weight_, readout_bias_ - readout_weight_},
      {"readout_bias", readout_bias_, score_weights_ - readout_bias_},
      {"score_weight", score_weights_, score_biases_ - score_weights_},
      {"score_bias", score_biases_, total_ - score_biases_},
  };
}

EvaluatorModel::EvaluatorModel(const EvaluatorShape& shape)
    : shape_(shape), layout_(shape) {
  if (shape.dim == 0 || shape.layers == 0 || shape.num_relations == 0 ||
      shape.input_width == 0)
    throw Error(ErrorCode::invalid_input,
                "evaluator needs positive dim, layers, relations and input width");
  params_.assign(layout_.size(), 0.0);
}

void EvaluatorModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = shape_.dim;
  auto fill = [&](std::size_t off, std::size_t n, double bound) {
    for (std::size_t i = 0; i < n; ++i)
      params_[off + i] = uniform_real(rng, -bound, bound);
  };
  auto glorot = [](std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  };
  std::fill(params_.begin(), params_.end(), 0.0);
  fill(layout_.projection(), d * shape_.input_width, glorot(shape_.input_width, d));
  if (shape_.features == InputFeatures::embeddings_and_hops) {
    fill(layout_.head_hops(), layout_.hop_labels() * d, 0.1);
    fill(layout_.tail_hops(), layout_.hop_labels() * d, 0.1);
  }
  for (std::size_t l = 0; l < shape_.layers; ++l)
    for (std::size_t q = 0; q < 2 * shape_.num_relations; ++q) {
      fill(layout_.transform(l, q), d * d, glorot(d, d));
      fill(layout_.relation(l, q), d, 0.1);
    }
  fill(layout_.attention(), 3 * d, glorot(3 * d, 1));
  fill(layout_.readout_weight(), d * d, glorot(d, d));
  for (std::size_t r = 0; r < shape_.num_relations; ++r)
    fill(layout_.score_weight(r), d, glorot(d, 1));
}

bool same_bytes(const EvaluatorModel& a, const EvaluatorModel& b) {
  if (!(a.shape() == b.shape())) return false;
  auto pa = a.params(), pb = b.params();
  return pa.size() == pb.size() &&
         std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0;
}

EvaluatorInput make_input(const Subgraph& sub, const Triple& query,
                          std::size_t radius) {
  if (!sub.parent) throw Error(ErrorCode::invalid_input, "subgraph has no parent graph");
  const KnowledgeGraph& g = *sub.parent;
  const auto nrel = static_cast<std::uint32_t>(g.num_relations());
  EvaluatorInput in;
  in.entities = sub.entities;
  in.query_relation = query.relation;
  const std::size_t n = in.entities.size();
  auto local = [&](EntityId v) {
    auto it = std::lower_bound(in.entities.begin(), in.entities.end(), v);
    return static_cast<std::uint32_t>(it - in.entities.begin());
  };
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (EdgeId e : sub.edges) {
    const Triple& x = g.triple(e);
    if (x == query) continue;
    const auto u = local(x.head), v = local(x.tail);
    in.messages.push_back({v, u, x.relation});
    in.messages.push_back({u, v, x.relation + nrel});
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  const auto far = static_cast<std::uint8_t>(radius + 1);
  auto hops_from = [&](EntityId source) {
    std::vector<std::uint8_t> dist(n, far);
    if (!sub.contains(source)) return dist;
    std::deque<std::uint32_t> queue{local(source)};
    dist[queue.front()] = 0;
    while (!queue.empty()) {
      auto u = queue.front();
      queue.pop_front();
      if (dist[u] + 1 >= far) continue;
      for (auto v : adj[u])
        if (dist[v] == far) {
          dist[v] = static_cast<std::uint8_t>(dist[u] + 1);
          queue.push_back(v);
        }
    }
    return dist;
  };
  in.head_hops = hops_from(query.head);
  in.tail_hops = hops_from(query.tail);
  return in;
}

std::vector<double> teacher_features(const EmbeddingModel& teacher,
                                     const EvaluatorInput& input) {
  const std::size_t w = teacher.entity_width();
  std::vector<double> out(input.entities.size() * w);
  for (std::size_t i = 0; i < input.entities.size(); ++i) {
    auto row = teacher.entity(input.entities[i]);
    std::copy(row.begin(), row.end(), out.begin() + i * w);
  }
  return out;
}

std::vector<double> rgat_forward(const EvaluatorModel& e, const EvaluatorInput& in,
                                 std::span<const double> features,
                                 ForwardCache* cache) {
  check_input(e, in, features);
  const auto& s = e.shape();
  const auto& lay = e.layout();
  const double* p = e.params().data();
  const std::size_t d = s.dim, n = in.entities.size(), w = s.input_width;
  const std::size_t m = in.messages.size();

  std::vector<double> x(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    matvec(p + lay.projection(), features.data() + i * w, &x[i * d], d, w);
    if (s.features == InputFeatures::embeddings_and_hops) {
      const double* hh = p + lay.head_hops() + in.head_hops[i] * d;
      const double* th = p + lay.tail_hops() + in.tail_hops[i] * d;
      for (std::size_t c = 0; c < d; ++c) x[i * d + c] += hh[c] + th[c];
    }
  }
  if (cache) {
    cache->states.assign(1, x);
    cache->alpha.clear();
    cache->fused.clear();
    cache->moved.clear();
  }

  const double* att = p + lay.attention();
  std::vector<double> alpha(m), fused(m * d), moved(m * d);
  for (std::size_t l = 0; l < s.layers; ++l) {
    std::vector<double> next(n * d, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const auto& msg = in.messages[k];
      const double* xi = &x[msg.dst * d];
      const double* xj = &x[msg.src * d];
      const double* eq = p + lay.relation(l, msg.relation);
      const double z = dot(att, xi, d) + dot(att + d, xj, d) + dot(att + 2 * d, eq, d);
      const double a = sigmoid(z);
      double* u = &fused[k * d];
      for (std::size_t c = 0; c < d; ++c) u[c] = eq[c] + xj[c];
      double* v = &moved[k * d];
      matvec(p + lay.transform(l, msg.relation), u, v, d, d);
      double* out = &next[msg.dst * d];
      for (std::size_t c = 0; c < d; ++c) out[c] += a * v[c];
      alpha[k] = a;
    }
    x = std::move(next);
    if (cache) {
      cache->states.push_back(x);
      cache->alpha.push_back(alpha);
      cache->fused.push_back(fused);
      cache->moved.push_back(moved);
    }
  }
  return x;
}

double subgraph_score(const EvaluatorModel& e, const EvaluatorInput& in,
                      std::span<const double> features, ForwardCache* cache) {
  if (in.entities.empty())
    throw Error(ErrorCode::invalid_input, "cannot score an empty subgraph");
  auto x = rgat_forward(e, in, features, cache);
  const auto& lay = e.layout();
  const double* p = e.params().data();
  const std::size_t d = e.shape().dim, n = in.entities.size();
  std::vector<double> pre(n * d), pooled(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &pre[i * d];
    matvec(p + lay.readout_weight(), &x[i * d], row, d, d);
    for (std::size_t c = 0; c < d; ++c) {
      row[c] += p[lay.readout_bias() + c];
      pooled[c] += std::max(row[c], 0.0);
    }
  }
  for (double& v : pooled) v /= static_cast<double>(n);
  const double z = dot(p + lay.score_weight(in.query_relation), pooled.data(), d) +
                   p[lay.score_bias(in.query_relation)];
  if (cache) {
    cache->readout_pre = std::move(pre);
    cache->pooled = std::move(pooled);
  }
  return z;
}

void subgraph_score_backward(const EvaluatorModel& e, const EvaluatorInput& in,
                             std::span<const double> features,
                             const ForwardCache& cache, double upstream,
                             std::span<double> grad) {
  const auto& s = e.shape();
  const auto& lay = e.layout();
  const double* p = e.params().data();
  const std::size_t d = s.dim, n = in.entities.size(), w = s.input_width;
  if (grad.size() != lay.size())
    throw Error(ErrorCode::shape_mismatch, "gradient buffer has the wrong size");
  if (cache.states.size() != s.layers + 1 || cache.pooled.size() != d)
    throw Error(ErrorCode::shape_mismatch, "forward cache does not match the model");
  double* gp = grad.data();
  const RelationId q = in.query_relation;

  // Z = w_q . X + c_q
  gp[lay.score_bias(q)] += upstream;
  for (std::size_t c = 0; c < d; ++c) gp[lay.score_weight(q) + c] += upstream * cache.pooled[c];

  // X = mean relu(F x + b)
  const double inv_n = 1.0 / static_cast<double>(n);
  const double* wq = p + lay.score_weight(q);
  const auto& top = cache.states.back();
  std::vector<double> gx(n * d, 0.0), gpre(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* pre = &cache.readout_pre[i * d];
    for (std::size_t c = 0; c < d; ++c)
      gpre[c] = pre[c] > 0.0 ? upstream * wq[c] * inv_n : 0.0;
    outer_add(gp + lay.readout_weight(), gpre.data(), &top[i * d], d, d);
    for (std::size_t c = 0; c < d; ++c) gp[lay.readout_bias() + c] += gpre[c];
    matvec_t_add(p + lay.readout_weight(), gpre.data(), &gx[i * d], d, d);
  }

  // Message-passing layers, last to first.
  const double* att = p + lay.attention();
  double* gatt = gp + lay.attention();
  std::vector<double> gv(d), gu(d);
  for (std::size_t l = s.layers; l-- > 0;) {
    const auto& x = cache.states[l];
    const auto& alpha = cache.alpha[l];
    const auto& fused = cache.fused[l];
    const auto& moved = cache.moved[l];
    std::vector<double> gprev(n * d, 0.0);
    for (std::size_t k = 0; k < in.messages.size(); ++k) {
      const auto& msg = in.messages[k];
      const double* g_out = &gx[msg.dst * d];
      const double a = alpha[k];
      const double* v = &moved[k * d];
      const double* u = &fused[k * d];
      const double ga = dot(g_out, v, d);
      for (std::size_t c = 0; c < d; ++c) gv[c] = a * g_out[c];
      outer_add(gp + lay.transform(l, msg.relation), gv.data(), u, d, d);
      std::fill(gu.begin(), gu.end(), 0.0);
      matvec_t_add(p + lay.transform(l, msg.relation), gv.data(), gu.data(), d, d);
      double* ge = gp + lay.relation(l, msg.relation);
      double* gxi = &gprev[msg.dst * d];
      double* gxj = &gprev[msg.src * d];
      const double gz = ga * a * (1.0 - a);
      const double* xi = &x[msg.dst * d];
      const double* xj = &x[msg.src * d];
      const double* eq = p + lay.relation(l, msg.relation);
      for (std::size_t c = 0; c < d; ++c) {
        ge[c] += gu[c] + gz * att[2 * d + c];
        gxj[c] += gu[c] + gz * att[d + c];
        gxi[c] += gz * att[c];
        gatt[c] += gz * xi[c];
        gatt[d + c] += gz * xj[c];
        gatt[2 * d + c] += gz * eq[c];
      }
    }
    gx = std::move(gprev);
  }

  // x0 = P f (+ head label + tail label)
  for (std::size_t i = 0; i < n; ++i) {
    const double* gi = &gx[i * d];
    outer_add(gp + lay.projection(), gi, features.data() + i * w, d, w);
    if (s.features == InputFeatures::embeddings_and_hops) {
      double* hh = gp + lay.head_hops() + in.head_hops[i] * d;
      double* th = gp + lay.tail_hops() + in.tail_hops[i] * d;
      for (std::size_t c = 0; c < d; ++c) {
        hh[c] += gi[c];
        th[c] += gi[c];
      }
    }
  }
}

namespace {

std::optional<Subgraph> try_enclosing(const KnowledgeGraph& g, EntityId h,
                                      EntityId t, std::size_t k) {
  if (h == t) return std::nullopt;
  try {
    return enclosing_subgraph(g, h, t, k);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::empty_subgraph) return std::nullopt;
    throw;
  }
}

struct Sample {
  EvaluatorInput input;
  std::vector<double> features;
};

Sample make_sample(const Subgraph& sub, const Triple& query,
                   const EmbeddingModel& teacher, std::size_t radius) {
  Sample s{make_input(sub, query, radius), {}};
  s.features = teacher_features(teacher, s.input);
  return s;
}

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  Adam(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

DistillResult distill(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                      const DistillConfig& cfg, const EpochCallback& on_epoch) {
  if (!(cfg.lambda >= 0.0))
    throw Error(ErrorCode::invalid_input, "lambda must be non-negative");
  if (cfg.batch_size == 0)
    throw Error(ErrorCode::invalid_input, "batch size must be positive");
  if (teacher.num_entities() < g.num_entities() ||
      teacher.num_relations() < g.num_relations())
    throw Error(ErrorCode::shape_mismatch, "teacher does not cover the graph");

  EvaluatorShape shape;
  shape.dim = cfg.dim;
  shape.layers = cfg.layers;
  shape.num_relations = g.num_relations();
  shape.input_width = teacher.entity_width();
  shape.radius = cfg.radius;
  shape.features = cfg.features;
  DistillResult result{EvaluatorModel(shape), {}, {}, 0};
  EvaluatorModel& model = result.model;
  model.initialize(derive_seed(cfg.seed, {0x65}));
  const auto& lay = model.layout();

  auto facts = g.triples();
  std::vector<Subgraph> enclosing;
  if (cfg.cache_dir) {
    SubgraphCache cache(*cfg.cache_dir, g, cfg.radius);
    enclosing = cache.load_or_build(facts);
    result.cache_hits = cache.was_hit() ? facts.size() : 0;
  } else {
    enclosing.reserve(facts.size());
    for (const auto& x : facts) {
      auto sub = try_enclosing(g, x.head, x.tail, cfg.radius);
      enclosing.push_back(sub ? std::move(*sub) : Subgraph{&g, {}, {}, SubgraphRole::enclosing});
    }
  }

  // Usable positives: facts whose endpoints differ (self-loops have no
  // enclosing subgraph).
  std::vector<std::size_t> usable;
  std::vector<double> phi(facts.size());
  std::vector<double> rel_sum(g.num_relations(), 0.0);
  std::vector<std::size_t> rel_count(g.num_relations(), 0);
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (enclosing[i].entities.empty()) continue;
    usable.push_back(i);
    phi[i] = score(teacher, facts[i]);
    rel_sum[facts[i].relation] += phi[i];
    ++rel_count[facts[i].relation];
  }
  auto params = model.params();
  for (std::size_t r = 0; r < g.num_relations(); ++r)
    if (rel_count[r]) params[lay.score_bias(r)] = rel_sum[r] / static_cast<double>(rel_count[r]);

  Adam adam(lay.size(), cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, {0x64}));
  std::vector<double> grad(lay.size());
  ForwardCache cache;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double objective = 0.0, gap_sum = 0.0;
    for (std::size_t start = 0; start < usable.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(usable.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = usable[b];
        const Triple& fact = facts[i];
        auto pos = make_sample(enclosing[i], fact, teacher, cfg.radius);
        const double z = subgraph_score(model, pos.input, pos.features, &cache);
        const double gap = phi[i] - z;
        double loss = gap * gap;
        double dz = -2.0 * gap;
        if (cfg.lambda > 0.0 && cfg.negatives > 0) {
          std::vector<EntityId> pool;
          for (EntityId v : enclosing[i].entities)
            if (v != fact.head && v != fact.tail) pool.push_back(v);
          if (!pool.empty()) {
            loss -= cfg.lambda * z;
            dz -= cfg.lambda;
          }
          subgraph_score_backward(model, pos.input, pos.features, cache,
                                  dz * inv_batch, grad);
          if (!pool.empty()) {
            const double wn = cfg.lambda / static_cast<double>(cfg.negatives);
            for (std::size_t k = 0; k < cfg.negatives; ++k) {
              const Triple neg{fact.head, fact.relation, pool[uniform_index(rng, pool.size())]};
              auto sub = try_enclosing(g, neg.head, neg.tail, cfg.radius);
              if (!sub) continue;
              auto s = make_sample(*sub, neg, teacher, cfg.radius);
              const double zn = subgraph_score(model, s.input, s.features, &cache);
              loss += wn * zn;
              subgraph_score_backward(model, s.input, s.features, cache,
                                      wn * inv_batch, grad);
            }
          }
        } else {
          subgraph_score_backward(model, pos.input, pos.features, cache,
                                  dz * inv_batch, grad);
        }
        objective += loss;
        gap_sum += gap * gap;
      }
      adam.step(params, grad);
    }
    const double count = static_cast<double>(std::max<std::size_t>(usable.size(), 1));
    const double mean = objective / count;
    if (!std::isfinite(mean) ||
        !std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); }))
      throw Error(ErrorCode::training_diverged,
                  "distillation diverged at epoch " + std::to_string(epoch + 1));
    result.epoch_objective.push_back(mean);
    result.epoch_gap.push_back(gap_sum / count);
    if (on_epoch) on_epoch(epoch + 1, mean, gap_sum / count);
  }
  return result;
}

double alignment_gap(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                     const EvaluatorModel& e, std::span<const Triple> facts) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& x : facts) {
    auto sub = try_enclosing(g, x.head, x.tail, e.shape().radius);
    if (!sub) continue;
    auto s = make_sample(*sub, x, teacher, e.shape().radius);
    const double gap = score(teacher, x) - subgraph_score(e, s.input, s.features);
    total += gap * gap;
    ++count;
  }
  if (count == 0)
    throw Error(ErrorCode::undefined_metric, "no fact has an enclosing subgraph");
  return total / static_cast<double>(count);
}

SubgraphScorer::SubgraphScorer(const KnowledgeGraph& g, const EmbeddingModel& teacher,
                               const EvaluatorModel& e)
    : g_(&g), teacher_(&teacher), e_(&e) {
  if (teacher.entity_width() != e.shape().input_width)
    throw Error(ErrorCode::shape_mismatch,
                "teacher row width does not match the evaluator input width");
  if (g.num_relations() != e.shape().num_relations)
    throw Error(ErrorCode::shape_mismatch,
                "graph relation count does not match the evaluator");
}

std::optional<double> SubgraphScorer::score(const Triple& query) const {
  auto sub = try_enclosing(*g_, query.head, query.tail, e_->shape().radius);
  if (!sub) return std::nullopt;
  return score_on(query, *sub);
}

double SubgraphScorer::score_on(const Triple& query, const Subgraph& sub) const {
  auto s = make_sample(sub, query, *teacher_, e_->shape().radius);
  return subgraph_score(*e_, s.input, s.features);
}

std::vector<std::optional<double>> SubgraphScorer::score_candidates(
    EntityId h, RelationId r, std::span<const EntityId> candidates) const {
  const std::size_t k = e_->shape().radius;
  std::vector<std::optional<double>> out(candidates.size());
  // Candidates beyond 2k hops of h have no enclosing subgraph.
  std::vector<char> near(g_->num_entities(), 0);
  for (const auto& [v, dist] : bfs_distances(*g_, h, 2 * k)) near[v] = 1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const EntityId v = candidates[i];
    if (v == h || v >= near.size() || !near[v]) continue;
    out[i] = score_on({h, r, v}, enclosing_subgraph(*g_, h, v, k));
  }
  return out;
}

std::size_t rank_from_scores(std::span<const std::optional<double>> scores,
                             std::size_t tail_index,
                             std::optional<double> tail_score) {
  if (tail_index >= scores.size())
    throw Error(ErrorCode::invalid_query, "tail index outside the candidate set");
  if (!tail_score) return scores.size();
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != tail_index && scores[i] && *scores[i] >= *tail_score) ++rank;
  return rank;
}

std::size_t evaluator_rank(const SubgraphScorer& scorer, const Triple& fact,
                           const Subgraph* explanation,
                           std::span<const EntityId> candidates, RankMode mode) {
  auto it = std::find(candidates.begin(), candidates.end(), fact.tail);
  if (it == candidates.end())
    throw Error(ErrorCode::invalid_query, "true tail is not among the candidates");
  if (mode == RankMode::explained && !explanation)
    throw Error(ErrorCode::invalid_input, "explained ranking needs an explanation");
  const auto tail_index = static_cast<std::size_t>(it - candidates.begin());
  auto scores = scorer.score_candidates(fact.head, fact.relation, candidates);
  std::optional<double> tail = scores[tail_index];
  if (mode == RankMode::explained) tail = scorer.score_on(fact, *explanation);
  return rank_from_scores(scores, tail_index, tail);
}

void write_evaluator(std::ostream& out, const EvaluatorModel& e) {
  const auto& s = e.shape();
  io::write_le(out, kMagic);
  io::write_le(out, kVersion);
  io::write_le<std::uint64_t>(out, s.dim);
  io::write_le<std::uint64_t>(out, s.layers);
  io::write_le<std::uint64_t>(out, s.num_relations);
  io::write_le<std::uint64_t>(out, s.input_width);
  io::write_le<std::uint64_t>(out, s.radius);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.features));
  io::write_le<std::uint64_t>(out, e.params().size());
  io::write_doubles(out, e.params());
}

EvaluatorModel read_evaluator(std::istream& in) {
  if (io::read_le<std::uint32_t>(in) != kMagic)
    throw Error(ErrorCode::parse_error, "not an evaluator file");
  if (auto v = io::read_le<std::uint32_t>(in); v != kVersion)
    throw Error(ErrorCode::parse_error,
                "unsupported evaluator file version " + std::to_string(v));
  EvaluatorShape s;
  s.dim = io::read_le<std::uint64_t>(in);
  s.layers = io::read_le<std::uint64_t>(in);
  s.num_relations = io::read_le<std::uint64_t>(in);
  s.input_width = io::read_le<std::uint64_t>(in);
  s.radius = io::read_le<std::uint64_t>(in);
  auto f = io::read_le<std::uint32_t>(in);
  if (f > 1) throw Error(ErrorCode::parse_error, "unknown feature mode in evaluator file");
  s.features = static_cast<InputFeatures>(f);
  if (s.radius > 250) throw Error(ErrorCode::parse_error, "evaluator radius out of range");
  EvaluatorModel e(s);
  if (io::read_le<std::uint64_t>(in) != e.params().size())
    throw Error(ErrorCode::parse_error, "evaluator parameter count does not match its shape");
  io::read_doubles(in, e.params());
  return e;
}

void save_evaluator(const std::filesystem::path& path, const EvaluatorModel& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  write_evaluator(out, e);
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

EvaluatorModel load_evaluator(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return read_evaluator(in);
}

std::uint64_t graph_fingerprint(const KnowledgeGraph& g) {
  std::uint64_t h = derive_seed(g.num_entities(), {g.num_relations(), g.num_triples()});
  for (const auto& t : g.triples()) h = derive_seed(h, {t.head, t.relation, t.tail});
  return h;
}

SubgraphCache::SubgraphCache(std::filesystem::path dir, const KnowledgeGraph& g,
                             std::size_t radius)
    : dir_(std::move(dir)), g_(&g), radius_(radius) {}

std::vector<Subgraph> SubgraphCache::load_or_build(std::span<const Triple> facts) {
  using nlohmann::json;
  const auto index_path = dir_ / "index.json";
  const auto data_path = dir_ / "subgraphs.bin";
  std::uint64_t facts_hash = 0;
  for (const auto& t : facts) facts_hash = derive_seed(facts_hash, {t.head, t.relation, t.tail});
  const std::string fingerprint = std::to_string(graph_fingerprint(*g_));
  const std::string facts_key = std::to_string(facts_hash);

  hit_ = false;
  std::vector<Subgraph> out;
  if (std::ifstream idx(index_path); idx) {
    json index = json::parse(idx, nullptr, false);
    if (!index.is_discarded() && index.value("graph", "") == fingerprint &&
        index.value("facts", "") == facts_key && index.value("k", -1) == static_cast<int>(radius_) &&
        index.value("count", std::size_t{0}) == facts.size()) {
      std::ifstream bin(data_path, std::ios::binary);
      try {
        if (!bin) throw Error(ErrorCode::io_error, "missing cache data");
        out.reserve(facts.size());
        for (std::size_t i = 0; i < facts.size(); ++i) {
          Subgraph s{g_, {}, {}, SubgraphRole::enclosing};
          s.entities.resize(io::read_le<std::uint32_t>(bin));
          for (auto& v : s.entities) v = io::read_le<std::uint32_t>(bin);
          s.edges.resize(io::read_le<std::uint32_t>(bin));
          for (auto& e : s.edges) e = io::read_le<std::uint32_t>(bin);
          out.push_back(std::move(s));
        }
        hit_ = true;
        return out;
      } catch (const Error&) {
        out.clear();
      }
    }
  }

  out.reserve(facts.size());
  for (const auto& x : facts) {
    auto sub = try_enclosing(*g_, x.head, x.tail, radius_);
    out.push_back(sub ? std::move(*sub) : Subgraph{g_, {}, {}, SubgraphRole::enclosing});
  }
  std::filesystem::create_directories(dir_);
  {
    std::ofstream bin(data_path, std::ios::binary);
    if (!bin) throw Error(ErrorCode::io_error, "cannot write " + data_path.string());
    for (const auto& s : out) {
      io::write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(s.entities.size()));
      for (auto v : s.entities) io::write_le<std::uint32_t>(bin, v);
      io::write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(s.edges.size()));
      for (auto e : s.edges) io::write_le<std::uint32_t>(bin, e);
    }
  }
  json index = {{"graph", fingerprint}, {"facts", facts_key}, {"k", radius_},
                {"count", facts.size()}, {"data", "subgraphs.bin"}};
  std::ofstream idx(index_path);
  if (!idx) throw Error(ErrorCode::io_error, "cannot write " + index_path.string());
  idx << index.dump(2) << "\n";
  return out;
}

}  // namespace kgx
