#include "kgx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "kgx/error.hpp"

namespace kgx {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kManifestFormat = 1;

std::string abs_string(const fs::path& p) {
  return p.empty() ? std::string() : fs::absolute(p).lexically_normal().string();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::invalid_input, std::string("missing ") + what + " path");
  if (!fs::exists(p)) throw Error(ErrorCode::io_error, std::string(what) + " not found: " + p.string());
}

ordered_json manifest(const char* command, ordered_json options, ordered_json result) {
  ordered_json j;
  j["command"] = command;
  j["format"] = kManifestFormat;
  j["options"] = std::move(options);
  j["result"] = std::move(result);
  return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path get_path(const json& j, const char* key) {
  return fs::path(j.at(key).get<std::string>());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fact_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fact_%05zu", index);
  return buf;
}

}  // namespace

// ---- options <-> json -----------------------------------------------------

ordered_json to_json(const PretrainOptions& o) {
  const auto& c = o.train_cfg;
  return {{"train", abs_string(o.train)},      {"model", abs_string(o.model)},
          {"kind", to_string(o.kind)},         {"dim", c.dim},
          {"epochs", c.epochs},                {"lr", c.learning_rate},
          {"batch_size", c.batch_size},        {"negatives", c.negatives},
          {"margin", c.margin},                {"seed", c.seed}};
}

PretrainOptions pretrain_options(const json& j) {
  PretrainOptions o;
  o.train = get_path(j, "train");
  o.model = get_path(j, "model");
  o.kind = parse_model_kind(j.at("kind").get<std::string>());
  auto& c = o.train_cfg;
  c.dim = j.at("dim");
  c.epochs = j.at("epochs");
  c.learning_rate = j.at("lr");
  c.batch_size = j.at("batch_size");
  c.negatives = j.at("negatives");
  c.margin = j.at("margin");
  c.seed = j.at("seed");
  return o;
}

ordered_json to_json(const ExplainOptions& o) {
  const auto& s = o.search;
  return {{"model", abs_string(o.model)},
          {"train", abs_string(o.train)},
          {"test", abs_string(o.test)},
          {"out_dir", abs_string(o.out_dir)},
          {"method", to_string(o.method)},
          {"n", s.n},
          {"k", s.k},
          {"retrain_epochs", s.retrain.epochs},
          {"retrain_lr", s.retrain.learning_rate},
          {"retrain_negatives", s.retrain.negatives},
          {"retrain_seed", s.retrain.seed},
          {"seed", s.seed},
          {"jobs", o.jobs}};
}

ExplainOptions explain_options(const json& j) {
  ExplainOptions o;
  o.model = get_path(j, "model");
  o.train = get_path(j, "train");
  o.test = get_path(j, "test");
  o.out_dir = get_path(j, "out_dir");
  const auto method = j.at("method").get<std::string>();
  if (method != "greedy" && method != "random")
    throw Error(ErrorCode::invalid_input, "unknown explanation method '" + method + "'");
  o.method = method == "greedy" ? ExplanationMethod::greedy : ExplanationMethod::random;
  auto& s = o.search;
  s.n = j.at("n");
  s.k = j.at("k");
  s.retrain.epochs = j.at("retrain_epochs");
  s.retrain.learning_rate = j.at("retrain_lr");
  s.retrain.negatives = j.at("retrain_negatives");
  s.retrain.seed = j.at("retrain_seed");
  s.seed = j.at("seed");
  o.jobs = get_or<std::size_t>(j, "jobs", 1);
  return o;
}

ordered_json to_json(const DistillOptions& o) {
  const auto& d = o.distill;
  ordered_json j = {{"model", abs_string(o.model)},
                    {"train", abs_string(o.train)},
                    {"test", o.test ? ordered_json(abs_string(*o.test)) : ordered_json(nullptr)},
                    {"evaluator", abs_string(o.evaluator)},
                    {"dim", d.dim},
                    {"layers", d.layers},
                    {"k", d.radius},
                    {"epochs", d.epochs},
                    {"lr", d.learning_rate},
                    {"lambda", d.lambda},
                    {"negatives", d.negatives},
                    {"batch_size", d.batch_size},
                    {"features", to_string(d.features)},
                    {"seed", d.seed},
                    {"cache_dir", d.cache_dir ? ordered_json(abs_string(*d.cache_dir))
                                              : ordered_json(nullptr)},
                    {"candidates", o.candidates},
                    {"full_candidates", o.full_candidates},
                    {"candidate_pool", to_string(o.pool)},
                    {"jobs", o.jobs}};
  return j;
}

DistillOptions distill_options(const json& j) {
  DistillOptions o;
  o.model = get_path(j, "model");
  o.train = get_path(j, "train");
  if (j.contains("test") && !j.at("test").is_null()) o.test = get_path(j, "test");
  o.evaluator = get_path(j, "evaluator");
  auto& d = o.distill;
  d.dim = j.at("dim");
  d.layers = j.at("layers");
  d.radius = j.at("k");
  d.epochs = j.at("epochs");
  d.learning_rate = j.at("lr");
  d.lambda = j.at("lambda");
  d.negatives = j.at("negatives");
  d.batch_size = j.at("batch_size");
  d.features = parse_input_features(j.at("features").get<std::string>());
  d.seed = j.at("seed");
  if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) d.cache_dir = get_path(j, "cache_dir");
  o.candidates = j.at("candidates");
  o.full_candidates = j.at("full_candidates");
  o.pool = parse_candidate_pool(get_or<std::string>(j, "candidate_pool", "global"));
  o.jobs = get_or<std::size_t>(j, "jobs", 1);
  return o;
}

ordered_json to_json(const EvaluateOptions& o) {
  return {{"model", abs_string(o.model)},
          {"evaluator", abs_string(o.evaluator)},
          {"train", abs_string(o.train)},
          {"test", abs_string(o.test)},
          {"explanations", abs_string(o.explanations)},
          {"report", abs_string(o.report)},
          {"candidates", o.candidates},
          {"full_candidates", o.full_candidates},
          {"candidate_pool", to_string(o.pool)},
          {"seed", o.seed},
          {"jobs", o.jobs}};
}

EvaluateOptions evaluate_options(const json& j) {
  EvaluateOptions o;
  o.model = get_path(j, "model");
  o.evaluator = get_path(j, "evaluator");
  o.train = get_path(j, "train");
  o.test = get_path(j, "test");
  o.explanations = get_path(j, "explanations");
  o.report = get_path(j, "report");
  o.candidates = j.at("candidates");
  o.full_candidates = j.at("full_candidates");
  o.pool = parse_candidate_pool(get_or<std::string>(j, "candidate_pool", "global"));
  o.seed = j.at("seed");
  o.jobs = get_or<std::size_t>(j, "jobs", 1);
  return o;
}

fs::path manifest_path_for(const fs::path& output) {
  return fs::path(output.string() + ".manifest.json");
}

// ---- shared helpers -------------------------------------------------------

ResolvedData resolve_data(const EmbeddingModel& model, const fs::path& train,
                          const std::optional<fs::path>& test) {
  require_file(train, "train file");
  ResolvedData d;
  d.vocab = model.vocab;
  auto triples = read_triples(train, d.vocab, /*grow=*/false);
  d.train = KnowledgeGraph(model.num_entities(), model.num_relations(), std::move(triples));
  if (test) {
    require_file(*test, "test file");
    Vocabulary extended = d.vocab;
    auto facts = read_triples(*test, extended, /*grow=*/true);
    for (const auto& t : facts) {
      if (t.head < model.num_entities() && t.tail < model.num_entities() &&
          t.relation < model.num_relations()) {
        d.test.push_back(t);
        continue;
      }
      d.unresolved.push_back(extended.entity_name(t.head) + "\t" +
                             extended.relation_name(t.relation) + "\t" +
                             extended.entity_name(t.tail) + ": unknown to the model");
    }
  }
  return d;
}

const char* to_string(CandidatePool p) {
  return p == CandidatePool::global ? "global" : "local";
}

CandidatePool parse_candidate_pool(std::string_view name) {
  if (name == "global") return CandidatePool::global;
  if (name == "local") return CandidatePool::local;
  throw Error(ErrorCode::invalid_input, "unknown candidate pool '" + std::string(name) + "'");
}

std::vector<EntityId> ranking_candidates(const KnowledgeGraph& g,
                                         const std::unordered_set<Triple, TripleHash>& known,
                                         const Triple& fact, std::size_t m,
                                         bool full, std::uint64_t seed,
                                         CandidatePool which, std::size_t radius) {
  std::vector<EntityId> eligible;
  if (which == CandidatePool::global) {
    eligible.resize(g.num_entities());
    std::iota(eligible.begin(), eligible.end(), EntityId{0});
  } else {
    eligible = k_hop_neighbors(g, fact.head, 2 * radius);
  }
  std::vector<EntityId> pool;
  pool.reserve(eligible.size());
  for (EntityId v : eligible) {
    if (v == fact.tail || v == fact.head) continue;
    if (known.count({fact.head, fact.relation, v})) continue;
    pool.push_back(v);
  }
  if (!full && pool.size() > m) {
    Rng rng(seed);
    for (std::size_t i = 0; i < m; ++i)
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    pool.resize(m);
  }
  pool.push_back(fact.tail);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- stages ---------------------------------------------------------------

PretrainSummary run_pretrain(const PretrainOptions& o, std::ostream* log) {
  require_file(o.train, "train file");
  auto data = load_dataset(o.train, std::nullopt);
  auto trained = pretrain(data.train, o.kind, o.train_cfg);
  trained.model.vocab = data.vocab;
  PretrainSummary s;
  s.epoch_loss = trained.epoch_loss;
  for (std::size_t e = 0; e < s.epoch_loss.size(); ++e)
    say(log, "epoch " + std::to_string(e + 1) + " loss " + fmt("%.6f", s.epoch_loss[e]));
  s.train_hits1 = data.train.num_triples() ? hits_at_1_on(trained.model, data.train.triples()) : 0.0;
  say(log, "train Hits@1 " + fmt("%.4f", s.train_hits1));
  if (o.model.has_parent_path()) fs::create_directories(o.model.parent_path());
  save_model(o.model, trained.model);
  ordered_json result = {{"entities", data.train.num_entities()},
                         {"relations", data.train.num_relations()},
                         {"triples", data.train.num_triples()},
                         {"epoch_loss", s.epoch_loss},
                         {"train_hits1", s.train_hits1}};
  write_text(manifest_path_for(o.model), manifest("pretrain", to_json(o), result).dump(2) + "\n");
  return s;
}

ExplainSummary run_explain(const ExplainOptions& o, std::ostream* log) {
  require_file(o.model, "model file");
  auto model = load_model(o.model);
  auto data = resolve_data(model, o.train, o.test);
  fs::create_directories(o.out_dir);

  struct Record {
    std::string status = "ok";
    std::string error;
    std::size_t evaluations = 0, hops = 0, edges = 0, entities = 0;
    bool fallback = false;
    double time_s = 0.0;
  };
  std::vector<Record> records(data.test.size());
  std::mutex log_mutex;
  parallel_for(data.test.size(), o.jobs, [&](std::size_t i) {
    const Triple& fact = data.test[i];
    Record& r = records[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      Explanation e;
      if (o.method == ExplanationMethod::greedy) {
        e = greedy_search(data.train, model, fact, o.search);
      } else {
        Rng rng(derive_seed(o.search.seed, {fact.head, fact.relation, fact.tail}));
        e = random_explanation(data.train, fact, o.search, rng);
      }
      r.time_s = seconds_since(start);
      r.evaluations = e.evaluations;
      r.hops = e.hops_searched;
      r.edges = e.key_subgraph.num_edges();
      r.entities = e.key_entities.size();
      r.fallback = e.fallback;
      const auto stem = o.out_dir / fact_stem(i);
      write_text(stem.string() + ".json", export_explanation(e, ExportFormat::structured, data.vocab));
      write_text(stem.string() + ".dot", export_explanation(e, ExportFormat::graph_text, data.vocab));
    } catch (const Error& e) {
      r.time_s = seconds_since(start);
      r.status = to_string(e.code());
      r.error = e.what();
      std::lock_guard lock(log_mutex);
      say(log, "fact " + std::to_string(i) + " skipped: " + r.error);
    }
  });

  ExplainSummary s;
  s.facts = data.test.size();
  ordered_json facts = ordered_json::array();
  double total_time = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& t = data.test[i];
    ordered_json row = {{"index", i},
                        {"head", data.vocab.entity_name(t.head)},
                        {"relation", data.vocab.relation_name(t.relation)},
                        {"tail", data.vocab.entity_name(t.tail)},
                        {"status", r.status}};
    if (r.status == "ok") {
      ++s.explained;
      total_time += r.time_s;
      row["file"] = fact_stem(i) + ".json";
      row["evaluations"] = r.evaluations;
      row["hops"] = r.hops;
      row["entities"] = r.entities;
      row["edges"] = r.edges;
      row["fallback"] = r.fallback;
    } else {
      ++s.failed;
      row["error"] = r.error;
    }
    row["time_s"] = r.time_s;
    facts.push_back(std::move(row));
  }
  s.mean_time_s = s.explained ? total_time / static_cast<double>(s.explained) : 0.0;
  ordered_json result = {{"facts", s.facts},
                         {"explained", s.explained},
                         {"failed", s.failed},
                         {"unresolved", data.unresolved},
                         {"mean_time_s", s.mean_time_s},
                         {"per_fact", facts}};
  write_text(o.out_dir / "manifest.json", manifest("explain", to_json(o), result).dump(2) + "\n");
  say(log, "explained " + std::to_string(s.explained) + " of " + std::to_string(s.facts) +
               " facts, " + std::to_string(s.failed) + " failed, mean " +
               fmt("%.3f", s.mean_time_s) + " s per fact");
  return s;
}

namespace {

std::unordered_set<Triple, TripleHash> known_facts(const ResolvedData& d) {
  std::unordered_set<Triple, TripleHash> known(d.train.triples().begin(), d.train.triples().end());
  known.insert(d.test.begin(), d.test.end());
  return known;
}

}  // namespace

DistillSummary run_distill(const DistillOptions& o, std::ostream* log) {
  require_file(o.model, "model file");
  if (!o.full_candidates && o.candidates < 2)
    throw Error(ErrorCode::invalid_input, "candidate sample size must be at least 2");
  auto teacher = load_model(o.model);
  auto data = resolve_data(teacher, o.train, o.test);
  auto result = distill(data.train, teacher, o.distill,
                        [&](std::size_t epoch, double objective, double gap) {
                          say(log, "epoch " + std::to_string(epoch) + " objective " +
                                       fmt("%.6f", objective) + " gap " + fmt("%.6f", gap));
                        });
  if (o.evaluator.has_parent_path()) fs::create_directories(o.evaluator.parent_path());
  save_evaluator(o.evaluator, result.model);

  DistillSummary s{result.epoch_objective, result.epoch_gap, std::nullopt};
  ordered_json faith = nullptr;
  if (o.test) {
    SubgraphScorer scorer(data.train, teacher, result.model);
    const auto known = known_facts(data);
    std::vector<std::size_t> t_rank(data.test.size()), e_rank(data.test.size());
    parallel_for(data.test.size(), o.jobs, [&](std::size_t i) {
      const Triple& f = data.test[i];
      auto cands = ranking_candidates(data.train, known, f, o.candidates, o.full_candidates,
                                      derive_seed(o.distill.seed, {i}), o.pool,
                                      o.distill.radius);
      t_rank[i] = tail_rank(teacher, f.head, f.relation, f.tail, cands);
      auto scores = scorer.score_candidates(f.head, f.relation, cands);
      const auto ti = static_cast<std::size_t>(
          std::lower_bound(cands.begin(), cands.end(), f.tail) - cands.begin());
      e_rank[i] = rank_from_scores(scores, ti, scores[ti]);
    });
    FaithfulnessRow row;
    row.facts = data.test.size();
    if (row.facts) {
      row.teacher_hits1 = hits_at_n(t_rank, 1);
      row.evaluator_hits1 = hits_at_n(e_rank, 1);
    }
    s.faithfulness = row;
    faith = {{"facts", row.facts},
             {"teacher_hits1", row.teacher_hits1},
             {"evaluator_hits1", row.evaluator_hits1}};
    say(log, "test Hits@1 teacher " + fmt("%.4f", row.teacher_hits1) + " evaluator " +
                 fmt("%.4f", row.evaluator_hits1));
  }
  ordered_json res = {{"epoch_objective", s.epoch_objective},
                      {"epoch_gap", s.epoch_gap},
                      {"faithfulness", faith}};
  write_text(manifest_path_for(o.evaluator), manifest("distill", to_json(o), res).dump(2) + "\n");
  return s;
}

Report run_evaluate(const EvaluateOptions& o, std::ostream* log) {
  require_file(o.model, "model file");
  require_file(o.evaluator, "evaluator file");
  require_file(o.explanations / "manifest.json", "explanation manifest");
  if (!o.full_candidates && o.candidates < 2)
    throw Error(ErrorCode::invalid_input, "candidate sample size must be at least 2");
  auto teacher = load_model(o.model);
  auto evaluator = load_evaluator(o.evaluator);
  auto data = resolve_data(teacher, o.train, o.test);
  const json explain_manifest = read_json(o.explanations / "manifest.json");
  const json& explain_opts = explain_manifest.at("options");
  const json& explained = explain_manifest.at("result").at("per_fact");

  SubgraphScorer scorer(data.train, teacher, evaluator);
  const auto known = known_facts(data);

  Report report;
  report.method = explain_opts.at("method").get<std::string>();
  report.candidates = o.full_candidates ? data.train.num_entities() : o.candidates;
  report.appendix.resize(data.test.size());
  std::vector<std::optional<Explanation>> parsed(data.test.size());

  parallel_for(data.test.size(), o.jobs, [&](std::size_t i) {
    const Triple& f = data.test[i];
    FactRecord& rec = report.appendix[i];
    rec.index = i;
    rec.fact = f;
    auto cands = ranking_candidates(data.train, known, f, o.candidates, o.full_candidates,
                                    derive_seed(o.seed, {i}), o.pool, evaluator.shape().radius);
    rec.teacher_rank = tail_rank(teacher, f.head, f.relation, f.tail, cands);
    auto scores = scorer.score_candidates(f.head, f.relation, cands);
    const auto ti = static_cast<std::size_t>(
        std::lower_bound(cands.begin(), cands.end(), f.tail) - cands.begin());
    rec.original_rank = rank_from_scores(scores, ti, scores[ti]);

    if (i >= explained.size()) {
      rec.status = "missing";
      return;
    }
    const json& row = explained[i];
    if (row.at("head") != data.vocab.entity_name(f.head) ||
        row.at("relation") != data.vocab.relation_name(f.relation) ||
        row.at("tail") != data.vocab.entity_name(f.tail)) {
      rec.status = "mismatch";
      return;
    }
    if (row.at("status") != "ok") {
      rec.status = row.at("status").get<std::string>();
      return;
    }
    std::ifstream in(o.explanations / row.at("file").get<std::string>());
    if (!in) {
      rec.status = "missing";
      return;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    auto e = parse_explanation(buf.str(), data.train, data.vocab);
    rec.explained_rank = rank_from_scores(scores, ti, scorer.score_on(f, e.key_subgraph));
    rec.edges = e.key_subgraph.num_edges();
    rec.evaluations = e.evaluations;
    rec.fallback = e.fallback;
    rec.time_s = row.at("time_s").get<double>();
    parsed[i] = std::move(e);
  });

  std::vector<Explanation> audited;
  for (auto& e : parsed)
    if (e && e->method == ExplanationMethod::greedy) audited.push_back(std::move(*e));
  const auto audit = complexity_audit(audited, explain_opts.at("n").get<std::size_t>(), false);
  report.audit_violations = audit.violations;
  summarize(report);

  write_text(o.report, report_json(report, data.vocab));
  ordered_json res = {{"facts", report.facts},
                      {"paired", report.paired},
                      {"audit_violations", report.audit_violations},
                      {"audit_mean_evaluations", audit.mean_evaluations},
                      {"audit_max_evaluations", audit.max_evaluations}};
  write_text(manifest_path_for(o.report), manifest("evaluate", to_json(o), res).dump(2) + "\n");
  auto show = [](const MetricValue& v) {
    return v.value ? fmt("%.4f", *v.value) : std::string("undefined");
  };
  say(log, report.method + ": Hits@1 " + show(report.hits[0]) + " Recall@1 " +
               show(report.recall[0]) + " F1@1 " + show(report.f1[0]) + " avg edges " +
               show(report.avg_edges));
  return report;
}

void replay(const fs::path& manifest_path, const std::optional<fs::path>& outputs_to,
            std::ostream* log) {
  const json m = read_json(manifest_path);
  const auto command = m.at("command").get<std::string>();
  const json& opts = m.at("options");
  auto redirect = [&](const fs::path& p) { return outputs_to ? *outputs_to / p.filename() : p; };
  if (command == "pretrain") {
    auto o = pretrain_options(opts);
    o.model = redirect(o.model);
    run_pretrain(o, log);
  } else if (command == "explain") {
    auto o = explain_options(opts);
    o.out_dir = redirect(o.out_dir);
    run_explain(o, log);
  } else if (command == "distill") {
    auto o = distill_options(opts);
    o.evaluator = redirect(o.evaluator);
    run_distill(o, log);
  } else if (command == "evaluate") {
    auto o = evaluate_options(opts);
    o.report = redirect(o.report);
    run_evaluate(o, log);
  } else {
    throw Error(ErrorCode::parse_error, "unknown command '" + command + "' in " +
                                            manifest_path.string());
  }
}

}  // namespace kgx
