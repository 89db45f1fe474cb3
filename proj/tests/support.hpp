#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "handdi/run.hpp"

namespace handdi::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "handdi-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw IoError("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Writes a planted dataset into `dir` and returns the config it ships with.
inline cli::RunConfig planted_config(const fs::path& dir, std::uint64_t seed, std::size_t drugs = 50) {
  PlantedOptions opt;
  opt.drugs = drugs;
  opt.seed = seed;
  cli::cmd_synth(dir, opt);
  cli::RunConfig c;
  cli::load_config_file(c, dir / "config.ini");
  return c;
}

/// Loaded planted data with graphs, split and model config, ready to train.
template <std::floating_point T>
struct Prepared {
  cli::LoadedData data;
  std::vector<NeighborGraph> graphs;
  SplitBundle bundle;
  ModelConfig config;
  Tensor<T> features;
  TrainOptions options;

  explicit Prepared(const cli::RunConfig& c)
      : data(cli::load_data(c)),
        graphs(cli::build_graphs(c, data.hin)),
        bundle(cli::make_split(c, data.hin)),
        config(cli::model_config(c, data.features.cols)),
        features(data.features.to_tensor<T>()),
        options(cli::train_options(c)) {}

  ModelInputs<T> inputs() const { return {features, graphs}; }
};

}  // namespace handdi::testing
