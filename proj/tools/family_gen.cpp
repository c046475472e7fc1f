// Writes a synthetic kinship dataset (train.tsv, test.tsv) to a directory.

#include <iostream>

#include <CLI11.hpp>

#include "kgx/error.hpp"
#include "kgx/family.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic kinship dataset generator"};
  kgx::FamilyConfig cfg;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--entities", cfg.entities)->capture_default_str();
  app.add_option("--train", cfg.train, "Training facts")->capture_default_str();
  app.add_option("--test", cfg.test, "Test facts")->capture_default_str();
  app.add_option("--k", cfg.radius, "Test pairs lie within 2k hops in train")->capture_default_str();
  app.add_option("--seed", cfg.seed)->envname("KGX_SEED")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    auto data = kgx::generate_family(cfg);
    kgx::write_dataset(data, out);
    std::cout << data.train.num_entities() << " entities, " << data.train.num_relations()
              << " relations, " << data.train.num_triples() << " train, " << data.test.size()
              << " test\n";
  } catch (const kgx::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
