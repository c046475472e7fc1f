#include "kgx/metrics.hpp"

#include <algorithm>

#include <json.hpp>

namespace kgx {

namespace {

void check_ranks(std::span<const std::size_t> ranks) {
  for (auto r : ranks)
    if (r == 0) throw Error(ErrorCode::invalid_input, "ranks start at 1");
}

void check_cutoff(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::invalid_input, "cutoff N must be at least 1");
}

}  // namespace

double hits_at_n(std::span<const std::size_t> ranks, std::size_t n) {
  check_cutoff(n);
  check_ranks(ranks);
  if (ranks.empty())
    throw Error(ErrorCode::undefined_metric, "Hits@" + std::to_string(n) + " of an empty rank set");
  auto hit = std::count_if(ranks.begin(), ranks.end(), [n](auto r) { return r <= n; });
  return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

double recall_at_n(std::span<const std::size_t> orig,
                   std::span<const std::size_t> expl, std::size_t n) {
  check_cutoff(n);
  check_ranks(orig);
  check_ranks(expl);
  if (orig.size() != expl.size())
    throw Error(ErrorCode::shape_mismatch, "rank sets are not aligned");
  std::size_t denom = 0, both = 0;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    if (orig[i] > n) continue;
    ++denom;
    if (expl[i] <= n) ++both;
  }
  if (denom == 0)
    throw Error(ErrorCode::undefined_metric,
                "Recall@" + std::to_string(n) + " has no fact with original rank <= " +
                    std::to_string(n));
  return static_cast<double>(both) / static_cast<double>(denom);
}

double f1_score(double recall, double hits) {
  if (recall + hits == 0.0) return 0.0;
  return 2.0 * recall * hits / (recall + hits);
}

double f1_at_n(std::span<const std::size_t> orig,
               std::span<const std::size_t> expl, std::size_t n) {
  const double r = recall_at_n(orig, expl, n);
  return f1_score(r, hits_at_n(expl, n));
}

std::size_t evaluation_bound(std::size_t depth, std::size_t n, std::size_t max_degree) {
  if (depth < 2) return 0;
  return (1 + (depth - 2) * n) * max_degree;
}

AuditRecord complexity_audit(std::span<const Explanation> explanations,
                             std::size_t n, bool strict) {
  AuditRecord rec;
  double evals = 0.0, edges = 0.0;
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    const auto& e = explanations[i];
    AuditEntry a;
    a.fact_index = i;
    a.evaluations = e.evaluations;
    a.depth = e.hops_searched;
    a.max_degree = e.max_degree;
    a.bound = evaluation_bound(a.depth, n, a.max_degree);
    a.violated = a.evaluations > a.bound;
    if (a.violated) {
      ++rec.violations;
      if (strict)
        throw Error(ErrorCode::audit_failure,
                    "fact " + std::to_string(i) + " (" + std::to_string(e.fact.head) + ", " +
                        std::to_string(e.fact.relation) + ", " + std::to_string(e.fact.tail) +
                        ") used " + std::to_string(a.evaluations) +
                        " evaluations, bound " + std::to_string(a.bound));
    }
    evals += static_cast<double>(a.evaluations);
    edges += static_cast<double>(e.key_subgraph.num_edges());
    rec.max_evaluations = std::max(rec.max_evaluations, a.evaluations);
    rec.entries.push_back(a);
  }
  if (!explanations.empty()) {
    rec.mean_evaluations = evals / static_cast<double>(explanations.size());
    rec.mean_edges = edges / static_cast<double>(explanations.size());
  }
  return rec;
}

void summarize(Report& report) {
  std::vector<std::size_t> teacher, orig, paired_orig, paired_expl;
  double edges = 0.0, evals = 0.0, time = 0.0;
  std::size_t explained = 0;
  for (const auto& f : report.appendix) {
    if (f.teacher_rank) teacher.push_back(*f.teacher_rank);
    if (f.original_rank) orig.push_back(*f.original_rank);
    if (f.original_rank && f.explained_rank) {
      paired_orig.push_back(*f.original_rank);
      paired_expl.push_back(*f.explained_rank);
    }
    if (f.status == "ok") {
      ++explained;
      edges += static_cast<double>(f.edges);
      evals += static_cast<double>(f.evaluations);
      time += f.time_s;
    }
  }
  report.facts = report.appendix.size();
  report.paired = paired_orig.size();
  for (std::size_t i = 0; i < kReportCutoffs.size(); ++i) {
    const std::size_t n = kReportCutoffs[i];
    report.teacher_hits[i] = guarded([&] { return hits_at_n(teacher, n); });
    report.hits[i] = guarded([&] { return hits_at_n(orig, n); });
    report.explained_hits[i] = guarded([&] { return hits_at_n(paired_expl, n); });
    report.recall[i] = guarded([&] { return recall_at_n(paired_orig, paired_expl, n); });
    report.f1[i] = guarded([&] { return f1_at_n(paired_orig, paired_expl, n); });
  }
  auto mean = [&](double total, const char* what) -> MetricValue {
    if (explained == 0) return {std::nullopt, std::string("no explained fact for ") + what};
    return {total / static_cast<double>(explained), {}};
  };
  report.avg_edges = mean(edges, "avg_edges");
  report.avg_evaluations = mean(evals, "avg_evaluations");
  report.mean_time_s = mean(time, "mean_time_s");
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json value_json(const MetricValue& v) {
  if (v.value) return *v.value;
  return "undefined";
}

ordered_json cutoffs_json(const std::array<MetricValue, 3>& vs) {
  ordered_json j = ordered_json::object();
  for (std::size_t i = 0; i < kReportCutoffs.size(); ++i)
    j[std::to_string(kReportCutoffs[i])] = value_json(vs[i]);
  return j;
}

ordered_json optional_rank(const std::optional<std::size_t>& r) {
  if (r) return *r;
  return nullptr;
}

}  // namespace

std::string report_json(const Report& report, const Vocabulary& vocab, bool mask_timing) {
  ordered_json j;
  j["method"] = report.method;
  j["candidates"] = report.candidates;
  j["facts"] = report.facts;
  j["paired"] = report.paired;
  j["hits"] = cutoffs_json(report.hits);
  j["recall"] = cutoffs_json(report.recall);
  j["f1"] = cutoffs_json(report.f1);
  j["explained_hits"] = cutoffs_json(report.explained_hits);
  j["teacher_hits"] = cutoffs_json(report.teacher_hits);
  j["avg_edges"] = value_json(report.avg_edges);
  j["avg_evaluations"] = value_json(report.avg_evaluations);
  j["mean_time_s"] = mask_timing && report.mean_time_s.defined()
                         ? ordered_json(0.0)
                         : value_json(report.mean_time_s);
  j["audit_violations"] = report.audit_violations;

  ordered_json undefined = ordered_json::object();
  auto note = [&](const char* key, const std::array<MetricValue, 3>& vs) {
    for (std::size_t i = 0; i < kReportCutoffs.size(); ++i)
      if (!vs[i].defined())
        undefined[std::string(key) + "@" + std::to_string(kReportCutoffs[i])] =
            vs[i].undefined_reason;
  };
  note("hits", report.hits);
  note("recall", report.recall);
  note("f1", report.f1);
  note("explained_hits", report.explained_hits);
  note("teacher_hits", report.teacher_hits);
  for (auto [key, v] : {std::pair{"avg_edges", &report.avg_edges},
                        std::pair{"avg_evaluations", &report.avg_evaluations},
                        std::pair{"mean_time_s", &report.mean_time_s}})
    if (!v->defined()) undefined[key] = v->undefined_reason;
  j["undefined"] = undefined;

  ordered_json per_fact = ordered_json::array();
  for (const auto& f : report.appendix) {
    ordered_json row;
    row["index"] = f.index;
    row["head"] = vocab.entity_name(f.fact.head);
    row["relation"] = vocab.relation_name(f.fact.relation);
    row["tail"] = vocab.entity_name(f.fact.tail);
    row["teacher_rank"] = optional_rank(f.teacher_rank);
    row["original_rank"] = optional_rank(f.original_rank);
    row["explained_rank"] = optional_rank(f.explained_rank);
    row["edges"] = f.edges;
    row["evaluations"] = f.evaluations;
    row["time_s"] = mask_timing ? 0.0 : f.time_s;
    row["fallback"] = f.fallback;
    row["status"] = f.status;
    per_fact.push_back(std::move(row));
  }
  j["per_fact"] = std::move(per_fact);
  return j.dump(2) + "\n";
}

}  // namespace kgx
