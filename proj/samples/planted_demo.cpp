// Trains the model on a planted synthetic dataset and prints test metrics
// and the learned meta-path weights.
//
//   example_planted [directory] [seed]

#include <filesystem>
#include <iostream>
#include <string>

#include "handdi/handdi.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "handdi-planted";
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 0;
  try {
    handdi::PlantedOptions planted;
    planted.seed = seed;
    handdi::cli::cmd_synth(dir, planted);

    handdi::cli::RunConfig c;
    handdi::cli::load_config_file(c, dir / "config.ini");
    const auto data = handdi::cli::load_data(c);
    const auto graphs = handdi::cli::build_graphs(c, data.hin);
    const auto bundle = handdi::cli::make_split(c, data.hin);
    const auto config = handdi::cli::model_config(c, data.features.cols);
    const auto features = data.features.to_tensor<float>();
    handdi::ModelInputs<float> inputs{features, graphs};

    std::cout << handdi::stats(data.hin).to_tsv();
    auto result = handdi::train(config, handdi::init_params<float>(config), bundle, inputs, handdi::cli::train_options(c));
    const auto m = handdi::evaluate_pairs(config, result.best, inputs, bundle.test);
    std::cout << "best_epoch\t" << result.history.best_epoch << '\n' << m.to_text();
    for (std::size_t v = 0; v < result.beta.size(); ++v) {
      std::cout << "beta." << config.metapaths[v] << '\t' << handdi::io::format_number(result.beta[v]) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
