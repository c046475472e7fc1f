#pragma once
// Ranking metrics for faithfulness and explanation quality.
//
//   Hits@N    |{s <= N}| / |S|
//   Recall@N  |{orig <= N} ∩ {expl <= N}| / |{orig <= N}|
//   F1@N      2 R H / (R + H), H = Hits@N of the explanation ranks; 0 when
//             R + H = 0
//
// Undefined values (empty rank sets, empty Recall denominators) raise
// undefined_metric from the functions and become explicit markers in a
// Report.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgx/error.hpp"
#include "kgx/explainer.hpp"

namespace kgx {

inline constexpr std::array<std::size_t, 3> kReportCutoffs{1, 3, 10};

double hits_at_n(std::span<const std::size_t> ranks, std::size_t n);
double recall_at_n(std::span<const std::size_t> orig,
                   std::span<const std::size_t> expl, std::size_t n);
double f1_at_n(std::span<const std::size_t> orig,
               std::span<const std::size_t> expl, std::size_t n);
double f1_score(double recall, double hits);

// A metric value or the reason it is undefined.
struct MetricValue {
  std::optional<double> value;
  std::string undefined_reason;

  bool defined() const { return value.has_value(); }
};

// Runs f and converts undefined_metric errors into markers.
template <typename F>
MetricValue guarded(F&& f) {
  try {
    return {f(), {}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_metric) throw;
    return {std::nullopt, e.what()};
  }
}

struct AuditEntry {
  std::size_t fact_index = 0;
  std::size_t evaluations = 0;
  std::size_t bound = 0;
  std::size_t depth = 0;
  std::size_t max_degree = 0;
  bool violated = false;
};

struct AuditRecord {
  std::vector<AuditEntry> entries;
  std::size_t violations = 0;
  double mean_evaluations = 0.0;
  std::size_t max_evaluations = 0;
  double mean_edges = 0.0;
};

// (1 + (L - 2) n) d_max for L >= 2, and 0 below (the tail is checked before
// anything is evaluated).
std::size_t evaluation_bound(std::size_t depth, std::size_t n, std::size_t max_degree);

// Checks every explanation's evaluation count against the bound. With
// strict set, the first violation throws audit_failure naming the fact.
AuditRecord complexity_audit(std::span<const Explanation> explanations,
                             std::size_t n, bool strict = true);

struct FactRecord {
  std::size_t index = 0;
  Triple fact;
  std::optional<std::size_t> teacher_rank;
  std::optional<std::size_t> original_rank;
  std::optional<std::size_t> explained_rank;
  std::size_t edges = 0;
  std::size_t evaluations = 0;
  double time_s = 0.0;
  bool fallback = false;
  std::string status = "ok";
};

struct Report {
  std::string method;
  std::size_t candidates = 0;
  std::array<MetricValue, 3> teacher_hits;
  std::array<MetricValue, 3> hits;           // evaluator, full subgraphs
  std::array<MetricValue, 3> explained_hits; // evaluator, explanations
  std::array<MetricValue, 3> recall;
  std::array<MetricValue, 3> f1;
  MetricValue avg_edges;
  MetricValue avg_evaluations;
  MetricValue mean_time_s;
  std::size_t facts = 0;
  std::size_t paired = 0;
  std::size_t audit_violations = 0;
  std::vector<FactRecord> appendix;
};

// Fills every aggregate from the appendix. Facts without an explained rank
// are excluded from the paired metrics.
void summarize(Report& report);

// Structured text with stable keys. With mask_timing the timing fields are
// written as 0 so that otherwise identical runs compare equal.
std::string report_json(const Report& report, const Vocabulary& vocab,
                        bool mask_timing = false);

}  // namespace kgx
