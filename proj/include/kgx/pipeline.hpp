#pragma once
// The four pipeline stages as library calls. Each stage reads only files
// written by earlier stages, writes its artifacts plus a manifest holding the
// fully resolved options, and can be replayed from that manifest.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "kgx/evaluator.hpp"
#include "kgx/explainer.hpp"
#include "kgx/kge.hpp"
#include "kgx/metrics.hpp"

namespace kgx {

namespace fs = std::filesystem;

// Where ranking candidates are drawn from: every entity, or only entities
// within 2k hops of the head (the ones a subgraph scorer can tell apart).
enum class CandidatePool { global, local };

const char* to_string(CandidatePool p);
CandidatePool parse_candidate_pool(std::string_view name);

struct PretrainOptions {
  fs::path train;
  fs::path model;  // output
  ModelKind kind = ModelKind::transe;
  TrainConfig train_cfg;
};

struct ExplainOptions {
  fs::path model;
  fs::path train;
  fs::path test;
  fs::path out_dir;
  ExplanationMethod method = ExplanationMethod::greedy;
  SearchConfig search;
  std::size_t jobs = 1;
};

struct DistillOptions {
  fs::path model;
  fs::path train;
  std::optional<fs::path> test;  // when set, faithfulness on the test split
  fs::path evaluator;            // output
  DistillConfig distill;
  std::size_t candidates = 100;
  bool full_candidates = false;
  CandidatePool pool = CandidatePool::global;
  std::size_t jobs = 1;
};

struct EvaluateOptions {
  fs::path model;
  fs::path evaluator;
  fs::path train;
  fs::path test;
  fs::path explanations;
  fs::path report;  // output
  std::size_t candidates = 100;
  bool full_candidates = false;
  CandidatePool pool = CandidatePool::global;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
};

nlohmann::ordered_json to_json(const PretrainOptions& o);
nlohmann::ordered_json to_json(const ExplainOptions& o);
nlohmann::ordered_json to_json(const DistillOptions& o);
nlohmann::ordered_json to_json(const EvaluateOptions& o);
PretrainOptions pretrain_options(const nlohmann::json& j);
ExplainOptions explain_options(const nlohmann::json& j);
DistillOptions distill_options(const nlohmann::json& j);
EvaluateOptions evaluate_options(const nlohmann::json& j);

// Manifest written next to a stage's primary output.
fs::path manifest_path_for(const fs::path& output);

struct PretrainSummary {
  std::vector<double> epoch_loss;
  double train_hits1 = 0.0;
};

struct ExplainSummary {
  std::size_t facts = 0;
  std::size_t explained = 0;
  std::size_t failed = 0;
  double mean_time_s = 0.0;
};

struct FaithfulnessRow {
  std::size_t facts = 0;
  double teacher_hits1 = 0.0;
  double evaluator_hits1 = 0.0;
};

struct DistillSummary {
  std::vector<double> epoch_objective;
  std::vector<double> epoch_gap;
  std::optional<FaithfulnessRow> faithfulness;
};

PretrainSummary run_pretrain(const PretrainOptions& o, std::ostream* log = nullptr);
ExplainSummary run_explain(const ExplainOptions& o, std::ostream* log = nullptr);
DistillSummary run_distill(const DistillOptions& o, std::ostream* log = nullptr);
Report run_evaluate(const EvaluateOptions& o, std::ostream* log = nullptr);

// Re-runs the stage recorded in a manifest. When outputs_to is set, every
// output path is redirected into that directory (same file names).
void replay(const fs::path& manifest, const std::optional<fs::path>& outputs_to,
            std::ostream* log = nullptr);

// Graph and test facts resolved through a model's vocabulary. Test facts that
// mention names unknown to the model are returned separately.
struct ResolvedData {
  Vocabulary vocab;
  KnowledgeGraph train;
  std::vector<Triple> test;
  std::vector<std::string> unresolved;  // one message per skipped test line
};

ResolvedData resolve_data(const EmbeddingModel& model, const fs::path& train,
                          const std::optional<fs::path>& test);

// Candidate tails for ranking one fact: the whole pool or M entities sampled
// from it, plus the true tail. The head itself and other known true tails of
// (h, r) are filtered out. Ascending.
std::vector<EntityId> ranking_candidates(const KnowledgeGraph& g,
                                         const std::unordered_set<Triple, TripleHash>& known,
                                         const Triple& fact, std::size_t m,
                                         bool full, std::uint64_t seed,
                                         CandidatePool pool = CandidatePool::global,
                                         std::size_t radius = 2);

// Runs f(i) for i in [0, count) on up to jobs threads. Results must be
// written to per-index slots so output order never depends on scheduling.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& f);

}  // namespace kgx
