#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "handdi/run.hpp"

namespace fs = std::filesystem;
using handdi::cli::RunConfig;

namespace {

// The config file is read before flag parsing so that flags win over it.
std::string find_config_flag(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

int run(int argc, char** argv) {
  RunConfig config;
  const std::string config_path = find_config_flag(argc, argv);
  if (!config_path.empty()) handdi::cli::load_config_file(config, config_path);

  CLI::App app{"Heterogeneous graph attention for drug-drug interaction prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string ignored_config;
  app.add_option("--config", ignored_config, "Sectioned key=value config file");
  app.add_option("--seed", config.seed, "Master random seed");
  app.add_option("--precision", config.precision, "Floating-point width for training")->check(CLI::IsMember({32, 64}));
  app.add_option("--protocol", config.protocol, "Split protocol")->check(CLI::IsMember({"edges", "coldstart"}));
  app.add_option("--features", config.features, "Initial drug features")->check(CLI::IsMember({"espf", "fingerprint"}));
  app.add_option("--metapaths", config.metapaths, "Comma-separated meta-path names (DID-1..DID-4)");
  app.add_option("--registry", config.registry, "Entity registry mode")->check(CLI::IsMember({"discover", "strict"}));
  app.add_option("--neighbor-threshold", config.neighbor_threshold, "Minimum path count for a neighbor");
  app.add_option("--epochs", config.epochs, "Maximum training epochs");
  app.add_option("--patience", config.patience, "Early-stopping patience");
  app.add_option("--lr", config.lr, "Adam learning rate");
  app.add_option("--weight-decay", config.weight_decay, "L2 weight decay");
  app.add_option("--batch-size", config.batch_size, "Pairs per step (0: full batch)");
  app.add_option("--hidden", config.hidden, "Per-head hidden width");
  app.add_option("--heads", config.heads, "Attention heads");
  app.add_option("--semantic-dim", config.semantic_dim, "Meta-path attention width");
  app.add_option("--dropout", config.dropout, "Dropout rate");
  app.add_option("--espf-threshold", config.espf_threshold, "Minimum pair frequency for an ESPF merge");
  app.add_option("--espf-max-size", config.espf_max_size, "ESPF vocabulary size cap");
  app.add_option("--drug-fraction", config.drug_fraction, "Held-out drug fraction for cold start");

  std::vector<std::pair<CLI::Option*, std::string*>> paths;
  auto path_option = [&](const std::string& flag, std::string& field, const std::string& help) {
    paths.emplace_back(app.add_option(flag, field, help), &field);
  };
  path_option("--smiles", config.smiles, "SMILES TSV");
  path_option("--fingerprints", config.fingerprints, "Fingerprint bit-string TSV");
  path_option("--drug-protein", config.drug_protein, "Drug-target TSV");
  path_option("--drug-side-effect", config.drug_side_effect, "Drug-side-effect TSV");
  path_option("--ppi", config.ppi, "Protein-protein interaction TSV");
  path_option("--ddi", config.ddi, "Known interaction TSV");
  path_option("--pairs", config.pairs, "Pair list to score");
  path_option("--checkpoint", config.checkpoint, "Model checkpoint");
  path_option("--output", config.output, "Output directory");

  handdi::PlantedOptions planted;
  std::string synth_dir = "synthetic";
  auto* synth = app.add_subcommand("synth", "Write a planted synthetic dataset");
  synth->add_option("--dir", synth_dir, "Destination directory");
  synth->add_option("--drugs", planted.drugs, "Number of drugs");
  synth->add_option("--proteins", planted.proteins, "Number of proteins");

  auto* build = app.add_subcommand("build-graph", "Load inputs, validate and summarize the HIN");
  auto* metapaths = app.add_subcommand("metapaths", "Write commuting matrices");
  auto* featurize = app.add_subcommand("featurize", "Build the ESPF vocabulary and drug features");
  auto* train = app.add_subcommand("train", "Train the model and write a checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Score the test split with a checkpoint");
  std::string variant = "MP";
  auto* ablate = app.add_subcommand("ablate", "Train an ablation variant");
  ablate->add_option("--variant", variant, "MP (fixed node attention) or N (uniform meta-path weights)")
      ->check(CLI::IsMember({"MP", "N"}));
  auto* predict = app.add_subcommand("predict", "Score a list of drug pairs");
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gradcheck->add_option("--inject-fault", config.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto& [opt, field] : paths) {
    if (opt->count() > 0) *field = fs::absolute(*field).string();
  }

  std::ostream& log = std::cout;
  if (synth->parsed()) {
    planted.seed = config.seed;
    return handdi::cli::cmd_synth(synth_dir, planted);
  }
  if (build->parsed()) return handdi::cli::cmd_build_graph(config, log);
  if (metapaths->parsed()) return handdi::cli::cmd_metapaths(config, log);
  if (featurize->parsed()) return handdi::cli::cmd_featurize(config, log);
  if (train->parsed()) return handdi::cli::cmd_train(config, log);
  if (evaluate->parsed()) return handdi::cli::cmd_evaluate(config, log);
  if (ablate->parsed()) return handdi::cli::cmd_ablate(config, handdi::cli::parse_variant(variant), log);
  if (predict->parsed()) return handdi::cli::cmd_predict(config, log);
  if (gradcheck->parsed()) return handdi::cli::cmd_gradcheck(config, log);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const handdi::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const handdi::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const handdi::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const handdi::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const handdi::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  }
}
