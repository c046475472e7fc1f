#pragma once
// Finite-difference gradient oracles shared by the unit tests and the
// acceptance runner.
//
// Each instance compares an analytic gradient vector g with the central
// difference estimate f by ||g - f|| / max(||g||, ||f||); two zero vectors
// compare equal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgx/evaluator.hpp"
#include "kgx/kge.hpp"
#include "kgx/random.hpp"

namespace kgx::test {

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

struct GradientReport {
  std::size_t instances = 0;
  double worst = 0.0;
};

// Head, relation and tail gradients of one score function on random rows.
inline GradientReport kge_gradient_check(ModelKind kind, std::size_t instances,
                                         std::uint64_t seed, std::size_t dim = 8) {
  Rng rng(seed);
  const std::size_t ew = kind == ModelKind::rotate ? 2 * dim : dim;
  GradientReport rep;
  const double step = 1e-6;
  for (std::size_t it = 0; it < instances; ++it) {
    std::vector<double> h(ew), r(dim), t(ew);
    for (auto& v : h) v = uniform_real(rng, -1, 1);
    for (auto& v : t) v = uniform_real(rng, -1, 1);
    for (auto& v : r)
      v = kind == ModelKind::rotate ? uniform_real(rng, 0, 6.283185307179586)
                                    : uniform_real(rng, -1, 1);
    std::vector<double> gh(ew, 0.0), gr(dim, 0.0), gt(ew, 0.0);
    add_score_gradient(kind, h, r, t, 1.0, gh, gr, gt);

    auto numeric = [&](std::vector<double>& x) {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = score(kind, h, r, t);
        x[i] = keep - step;
        const double down = score(kind, h, r, t);
        x[i] = keep;
        out[i] = (up - down) / (2 * step);
      }
      return out;
    };
    for (double err : {relative_error(gh, numeric(h)), relative_error(gr, numeric(r)),
                       relative_error(gt, numeric(t))})
      rep.worst = std::max(rep.worst, err);
    ++rep.instances;
  }
  return rep;
}

// Random evaluator input: n entities, m random messages, random hop labels.
struct EvaluatorInstance {
  EvaluatorModel model;
  EvaluatorInput input;
  std::vector<double> features;
};

inline EvaluatorInstance random_evaluator_instance(Rng& rng, InputFeatures features) {
  EvaluatorShape shape;
  shape.dim = 4;
  shape.layers = 2;
  shape.num_relations = 2;
  shape.input_width = 3;
  shape.radius = 2;
  shape.features = features;
  EvaluatorInstance x{EvaluatorModel(shape), {}, {}};
  x.model.initialize(rng());
  // Nonzero biases so that every block sits at a generic point.
  for (double& p : x.model.params()) p += uniform_real(rng, -0.3, 0.3);

  const std::size_t n = 2 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) x.input.entities.push_back(static_cast<EntityId>(i));
  const std::size_t m = 1 + uniform_index(rng, 3 * n);
  for (std::size_t k = 0; k < m; ++k)
    x.input.messages.push_back({static_cast<std::uint32_t>(uniform_index(rng, n)),
                                static_cast<std::uint32_t>(uniform_index(rng, n)),
                                static_cast<std::uint32_t>(uniform_index(rng, 4))});
  for (std::size_t i = 0; i < n; ++i) {
    x.input.head_hops.push_back(static_cast<std::uint8_t>(uniform_index(rng, 4)));
    x.input.tail_hops.push_back(static_cast<std::uint8_t>(uniform_index(rng, 4)));
  }
  x.input.query_relation = static_cast<RelationId>(uniform_index(rng, 2));
  x.features.resize(n * 3);
  for (double& f : x.features) f = uniform_real(rng, -1, 1);
  return x;
}

// Worst relative error per named parameter block.
inline std::map<std::string, double> evaluator_gradient_check(std::size_t instances,
                                                              std::uint64_t seed) {
  Rng rng(seed);
  std::map<std::string, double> worst;
  const double step = 1e-6;
  for (std::size_t it = 0; it < instances; ++it) {
    auto features = it % 2 ? InputFeatures::embeddings : InputFeatures::embeddings_and_hops;
    auto x = random_evaluator_instance(rng, features);
    ForwardCache cache;
    subgraph_score(x.model, x.input, x.features, &cache);
    std::vector<double> grad(x.model.layout().size(), 0.0);
    subgraph_score_backward(x.model, x.input, x.features, cache, 1.0, grad);

    auto params = x.model.params();
    for (const auto& block : x.model.layout().blocks()) {
      std::vector<double> analytic(grad.begin() + block.offset,
                                   grad.begin() + block.offset + block.size);
      std::vector<double> numeric(block.size);
      for (std::size_t i = 0; i < block.size; ++i) {
        double& p = params[block.offset + i];
        const double keep = p;
        p = keep + step;
        const double up = subgraph_score(x.model, x.input, x.features);
        p = keep - step;
        const double down = subgraph_score(x.model, x.input, x.features);
        p = keep;
        numeric[i] = (up - down) / (2 * step);
      }
      double& w = worst[block.name];
      w = std::max(w, relative_error(analytic, numeric));
    }
  }
  return worst;
}

}  // namespace kgx::test
