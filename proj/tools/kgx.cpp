// kgx: pretrain, explain, distill, evaluate, replay.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kgx/error.hpp"
#include "kgx/pipeline.hpp"

namespace {

int exit_code_for(kgx::ErrorCode code) {
  switch (code) {
    case kgx::ErrorCode::training_diverged:
    case kgx::ErrorCode::audit_failure:
    case kgx::ErrorCode::no_explanation:
    case kgx::ErrorCode::undefined_metric:
      return 1;
    default:
      return 2;
  }
}

void add_seed(CLI::App* cmd, std::uint64_t& seed) {
  cmd->add_option("--seed", seed, "Random seed")->envname("KGX_SEED")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgraph explanations for knowledge graph completion"};
  app.require_subcommand(1);

  // pretrain
  kgx::PretrainOptions pre;
  std::string kind = "transe";
  std::optional<double> margin;
  auto* cmd_pre = app.add_subcommand("pretrain", "Train a KGE model");
  cmd_pre->add_option("--train", pre.train, "Training triples (TSV)")->required();
  cmd_pre->add_option("--model", pre.model, "Output model file")->required();
  cmd_pre->add_option("--kind", kind, "transe | distmult | rotate")->capture_default_str();
  cmd_pre->add_option("--dim", pre.train_cfg.dim)->capture_default_str();
  cmd_pre->add_option("--epochs", pre.train_cfg.epochs)->capture_default_str();
  cmd_pre->add_option("--lr", pre.train_cfg.learning_rate)->capture_default_str();
  cmd_pre->add_option("--batch-size", pre.train_cfg.batch_size)->capture_default_str();
  cmd_pre->add_option("--negatives", pre.train_cfg.negatives)->capture_default_str();
  cmd_pre->add_option("--margin", margin, "Margin gamma (default by kind)");
  add_seed(cmd_pre, pre.train_cfg.seed);

  // explain
  kgx::ExplainOptions ex;
  std::string baseline = "greedy";
  auto* cmd_ex = app.add_subcommand("explain", "Search key subgraphs for test facts");
  cmd_ex->add_option("--model", ex.model)->required();
  cmd_ex->add_option("--train", ex.train)->required();
  cmd_ex->add_option("--test", ex.test)->required();
  cmd_ex->add_option("--out-dir", ex.out_dir)->required();
  cmd_ex->add_option("--baseline", baseline, "greedy | random")->capture_default_str();
  cmd_ex->add_option("--n", ex.search.n, "Entities kept per hop")->capture_default_str();
  cmd_ex->add_option("--k", ex.search.k, "Enclosing subgraph radius")->capture_default_str();
  cmd_ex->add_option("--retrain-epochs", ex.search.retrain.epochs)->capture_default_str();
  cmd_ex->add_option("--retrain-lr", ex.search.retrain.learning_rate)->capture_default_str();
  cmd_ex->add_option("--retrain-negatives", ex.search.retrain.negatives)->capture_default_str();
  add_seed(cmd_ex, ex.search.seed);
  cmd_ex->add_option("--jobs", ex.jobs)->capture_default_str();

  // distill
  kgx::DistillOptions di;
  std::string features = kgx::to_string(di.distill.features);
  std::optional<std::string> test_path, cache_dir;
  auto* cmd_di = app.add_subcommand("distill", "Distill the subgraph evaluator");
  cmd_di->add_option("--model", di.model)->required();
  cmd_di->add_option("--train", di.train)->required();
  cmd_di->add_option("--test", test_path, "Report faithfulness on these facts");
  cmd_di->add_option("--evaluator", di.evaluator, "Output evaluator file")->required();
  cmd_di->add_option("--dim", di.distill.dim)->capture_default_str();
  cmd_di->add_option("--layers", di.distill.layers)->capture_default_str();
  cmd_di->add_option("--k", di.distill.radius)->capture_default_str();
  cmd_di->add_option("--epochs", di.distill.epochs)->capture_default_str();
  cmd_di->add_option("--lr", di.distill.learning_rate)->capture_default_str();
  cmd_di->add_option("--lambda", di.distill.lambda)->capture_default_str();
  cmd_di->add_option("--negatives", di.distill.negatives)->capture_default_str();
  cmd_di->add_option("--batch-size", di.distill.batch_size)->capture_default_str();
  cmd_di->add_option("--features", features, "embeddings | embeddings+hops")->capture_default_str();
  cmd_di->add_option("--cache-dir", cache_dir, "Subgraph cache directory");
  cmd_di->add_option("--candidates", di.candidates, "Sampled candidates M")->capture_default_str();
  cmd_di->add_flag("--full-candidates", di.full_candidates, "Rank against the whole pool");
  std::string di_pool = "global", ev_pool = "global";
  cmd_di->add_option("--candidate-pool", di_pool, "global | local")->capture_default_str();
  add_seed(cmd_di, di.distill.seed);
  cmd_di->add_option("--jobs", di.jobs)->capture_default_str();

  // evaluate
  kgx::EvaluateOptions ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Score explanations with the evaluator");
  cmd_ev->add_option("--model", ev.model)->required();
  cmd_ev->add_option("--evaluator", ev.evaluator)->required();
  cmd_ev->add_option("--train", ev.train)->required();
  cmd_ev->add_option("--test", ev.test)->required();
  cmd_ev->add_option("--explanations", ev.explanations)->required();
  cmd_ev->add_option("--report", ev.report)->required();
  cmd_ev->add_option("--candidates", ev.candidates, "Sampled candidates M")->capture_default_str();
  cmd_ev->add_flag("--full-candidates", ev.full_candidates, "Rank against the whole pool");
  cmd_ev->add_option("--candidate-pool", ev_pool, "global | local")->capture_default_str();
  add_seed(cmd_ev, ev.seed);
  cmd_ev->add_option("--jobs", ev.jobs)->capture_default_str();

  // replay
  std::string manifest;
  std::optional<std::string> outputs_to;
  auto* cmd_re = app.add_subcommand("replay", "Re-run a stage from its manifest");
  cmd_re->add_option("manifest", manifest)->required();
  cmd_re->add_option("--outputs-to", outputs_to, "Write outputs into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cmd_pre) {
      pre.kind = kgx::parse_model_kind(kind);
      pre.train_cfg.margin = margin ? *margin : kgx::default_margin(pre.kind);
      kgx::run_pretrain(pre, &std::cout);
    } else if (*cmd_ex) {
      if (baseline != "greedy" && baseline != "random")
        throw kgx::Error(kgx::ErrorCode::invalid_input, "--baseline must be greedy or random");
      ex.method = baseline == "greedy" ? kgx::ExplanationMethod::greedy
                                       : kgx::ExplanationMethod::random;
      ex.search.retrain.seed = ex.search.seed;
      auto s = kgx::run_explain(ex, &std::cout);
      if (s.failed) std::cerr << s.failed << " facts could not be explained\n";
    } else if (*cmd_di) {
      di.distill.features = kgx::parse_input_features(features);
      di.pool = kgx::parse_candidate_pool(di_pool);
      if (test_path) di.test = *test_path;
      if (cache_dir) di.distill.cache_dir = *cache_dir;
      kgx::run_distill(di, &std::cout);
    } else if (*cmd_ev) {
      ev.pool = kgx::parse_candidate_pool(ev_pool);
      kgx::run_evaluate(ev, &std::cout);
    } else if (*cmd_re) {
      std::optional<std::filesystem::path> to;
      if (outputs_to) to = *outputs_to;
      kgx::replay(manifest, to, &std::cout);
    }
  } catch (const kgx::Error& e) {
    std::cerr << "error (" << kgx::to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
