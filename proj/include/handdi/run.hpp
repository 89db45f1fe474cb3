#pragma once

#include <type_traits>
#include <numeric>
#include <functional>
#include <fstream>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "handdi/checkpoint.hpp"
#include "handdi/dataset.hpp"
#include "handdi/errors.hpp"
#include "handdi/espf.hpp"
#include "handdi/gradcheck.hpp"
#include "handdi/han.hpp"
#include "handdi/hin.hpp"
#include "handdi/io.hpp"
#include "handdi/metapath.hpp"
#include "handdi/metrics.hpp"
#include "handdi/synthetic.hpp"
#include "handdi/training.hpp"

namespace handdi::cli {

namespace fs = std::filesystem;

/// Effective settings of one command. Defaults follow the published
/// hyperparameters; config file values override defaults and command-line
/// flags override both.
struct RunConfig {
  std::uint64_t seed = 0;

  // [data]
  std::string smiles;
  std::string fingerprints;
  std::string drug_protein;
  std::string drug_side_effect;
  std::string ppi;
  std::string ddi;
  std::string pairs;
  std::string checkpoint;
  std::string output = "out";

  // [model]
  std::size_t hidden = 8;
  std::size_t heads = 8;
  std::size_t semantic_dim = 128;
  double leaky_slope = 0.2;
  double dropout = 0.6;
  std::string activation = "relu";
  std::string reduce = "mean";

  // [training]
  double lr = 0.005;
  double weight_decay = 0.001;
  std::size_t epochs = 200;
  std::size_t patience = 100;
  std::size_t batch_size = 0;
  int precision = 32;

  // [split]
  std::string protocol = "edges";
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  double drug_fraction = 0.2;

  // [features]
  std::string features = "espf";
  std::size_t espf_threshold = 5;
  std::size_t espf_max_size = 512;

  // [graph]
  std::string metapaths = "DID-1,DID-2,DID-3,DID-4";
  std::uint64_t neighbor_threshold = 1;
  std::string registry = "discover";

  // [gradcheck]
  std::size_t gradcheck_drugs = 12;
  std::size_t gradcheck_probes = 12;
  double gradcheck_epsilon = 1e-5;
  double gradcheck_tolerance = 1e-5;
  std::string inject_fault;  // op name whose adjoint gets corrupted

  fs::path base_dir;  // relative data paths resolve against this

  fs::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }
  fs::path output_dir() const { return resolve(output); }

  /// Sectioned key=value text in the config-file format.
  std::string echo() const {
    std::ostringstream os;
    os << "seed = " << seed << "\n\n[data]\n"
       << "smiles = " << smiles << "\nfingerprints = " << fingerprints << "\ndrug_protein = " << drug_protein
       << "\ndrug_side_effect = " << drug_side_effect << "\nppi = " << ppi << "\nddi = " << ddi
       << "\npairs = " << pairs << "\ncheckpoint = " << checkpoint << "\noutput = " << output << "\n\n[model]\n"
       << "hidden = " << hidden << "\nheads = " << heads << "\nsemantic_dim = " << semantic_dim
       << "\nleaky_slope = " << io::format_number(leaky_slope) << "\ndropout = " << io::format_number(dropout)
       << "\nactivation = " << activation << "\nreduce = " << reduce << "\n\n[training]\n"
       << "lr = " << io::format_number(lr) << "\nweight_decay = " << io::format_number(weight_decay)
       << "\nepochs = " << epochs << "\npatience = " << patience << "\nbatch_size = " << batch_size
       << "\nprecision = " << precision << "\n\n[split]\n"
       << "protocol = " << protocol << "\ntrain_ratio = " << io::format_number(train_ratio)
       << "\nval_ratio = " << io::format_number(val_ratio) << "\ntest_ratio = " << io::format_number(test_ratio)
       << "\ndrug_fraction = " << io::format_number(drug_fraction) << "\n\n[features]\n"
       << "mode = " << features << "\nespf_threshold = " << espf_threshold << "\nespf_max_size = " << espf_max_size
       << "\n\n[graph]\n"
       << "metapaths = " << metapaths << "\nneighbor_threshold = " << neighbor_threshold << "\nregistry = " << registry
       << "\n";
    return os.str();
  }
};

namespace detail {

template <class V>
void assign(V& field, std::string_view key, std::string_view text) {
  if constexpr (std::is_same_v<V, std::string>) {
    field = std::string(text);
  } else if (!io::parse_number(text, field)) {
    throw ParseError("config: invalid value '" + std::string(text) + "' for " + std::string(key), 0);
  }
}

}  // namespace detail

/// Sets one `section.key` (top-level keys have no section).
inline void set_value(RunConfig& c, const std::string& key, std::string_view value) {
  using detail::assign;
  static const std::map<std::string, std::function<void(RunConfig&, std::string_view)>> setters = {
      {"seed", [](RunConfig& c, std::string_view v) { assign(c.seed, "seed", v); }},
      {"data.smiles", [](RunConfig& c, std::string_view v) { assign(c.smiles, "", v); }},
      {"data.fingerprints", [](RunConfig& c, std::string_view v) { assign(c.fingerprints, "", v); }},
      {"data.drug_protein", [](RunConfig& c, std::string_view v) { assign(c.drug_protein, "", v); }},
      {"data.drug_side_effect", [](RunConfig& c, std::string_view v) { assign(c.drug_side_effect, "", v); }},
      {"data.ppi", [](RunConfig& c, std::string_view v) { assign(c.ppi, "", v); }},
      {"data.ddi", [](RunConfig& c, std::string_view v) { assign(c.ddi, "", v); }},
      {"data.pairs", [](RunConfig& c, std::string_view v) { assign(c.pairs, "", v); }},
      {"data.checkpoint", [](RunConfig& c, std::string_view v) { assign(c.checkpoint, "", v); }},
      {"data.output", [](RunConfig& c, std::string_view v) { assign(c.output, "", v); }},
      {"model.hidden", [](RunConfig& c, std::string_view v) { assign(c.hidden, "model.hidden", v); }},
      {"model.heads", [](RunConfig& c, std::string_view v) { assign(c.heads, "model.heads", v); }},
      {"model.semantic_dim", [](RunConfig& c, std::string_view v) { assign(c.semantic_dim, "model.semantic_dim", v); }},
      {"model.leaky_slope", [](RunConfig& c, std::string_view v) { assign(c.leaky_slope, "model.leaky_slope", v); }},
      {"model.dropout", [](RunConfig& c, std::string_view v) { assign(c.dropout, "model.dropout", v); }},
      {"model.activation", [](RunConfig& c, std::string_view v) { assign(c.activation, "", v); }},
      {"model.reduce", [](RunConfig& c, std::string_view v) { assign(c.reduce, "", v); }},
      {"training.lr", [](RunConfig& c, std::string_view v) { assign(c.lr, "training.lr", v); }},
      {"training.weight_decay", [](RunConfig& c, std::string_view v) { assign(c.weight_decay, "training.weight_decay", v); }},
      {"training.epochs", [](RunConfig& c, std::string_view v) { assign(c.epochs, "training.epochs", v); }},
      {"training.patience", [](RunConfig& c, std::string_view v) { assign(c.patience, "training.patience", v); }},
      {"training.batch_size", [](RunConfig& c, std::string_view v) { assign(c.batch_size, "training.batch_size", v); }},
      {"training.precision", [](RunConfig& c, std::string_view v) { assign(c.precision, "training.precision", v); }},
      {"split.protocol", [](RunConfig& c, std::string_view v) { assign(c.protocol, "", v); }},
      {"split.train_ratio", [](RunConfig& c, std::string_view v) { assign(c.train_ratio, "split.train_ratio", v); }},
      {"split.val_ratio", [](RunConfig& c, std::string_view v) { assign(c.val_ratio, "split.val_ratio", v); }},
      {"split.test_ratio", [](RunConfig& c, std::string_view v) { assign(c.test_ratio, "split.test_ratio", v); }},
      {"split.drug_fraction", [](RunConfig& c, std::string_view v) { assign(c.drug_fraction, "split.drug_fraction", v); }},
      {"features.mode", [](RunConfig& c, std::string_view v) { assign(c.features, "", v); }},
      {"features.espf_threshold", [](RunConfig& c, std::string_view v) { assign(c.espf_threshold, "features.espf_threshold", v); }},
      {"features.espf_max_size", [](RunConfig& c, std::string_view v) { assign(c.espf_max_size, "features.espf_max_size", v); }},
      {"graph.metapaths", [](RunConfig& c, std::string_view v) { assign(c.metapaths, "", v); }},
      {"graph.neighbor_threshold", [](RunConfig& c, std::string_view v) { assign(c.neighbor_threshold, "graph.neighbor_threshold", v); }},
      {"graph.registry", [](RunConfig& c, std::string_view v) { assign(c.registry, "", v); }},
      {"gradcheck.drugs", [](RunConfig& c, std::string_view v) { assign(c.gradcheck_drugs, "gradcheck.drugs", v); }},
      {"gradcheck.probes", [](RunConfig& c, std::string_view v) { assign(c.gradcheck_probes, "gradcheck.probes", v); }},
      {"gradcheck.epsilon", [](RunConfig& c, std::string_view v) { assign(c.gradcheck_epsilon, "gradcheck.epsilon", v); }},
      {"gradcheck.tolerance", [](RunConfig& c, std::string_view v) { assign(c.gradcheck_tolerance, "gradcheck.tolerance", v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ParseError("config: unknown key '" + key + "'", 0);
  it->second(c, value);
}

/// Parses the flat `key = value` format with `[section]` headers; `#` and `;`
/// start comment lines.
inline void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto body = io::trim(line);
    if (body.empty() || body.front() == '#' || body.front() == ';') continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError("config line " + std::to_string(number) + ": unterminated section", number);
      section = std::string(io::trim(body.substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config line " + std::to_string(number) + ": expected 'key = value'", number);
    }
    const std::string key = std::string(io::trim(body.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set_value(config, full, io::trim(body.substr(eq + 1)));
    } catch (const ParseError& e) {
      throw ParseError("config line " + std::to_string(number) + ": " + e.what(), number);
    }
  }
}

inline void load_config_file(RunConfig& config, const fs::path& path) {
  apply_config_text(config, io::read_file(path));
  config.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
}

inline std::vector<std::string> metapath_names(const RunConfig& c) {
  std::vector<std::string> out;
  for (auto part : io::split(c.metapaths, ',')) {
    const auto name = io::trim(part);
    if (name.empty()) continue;
    builtin_spec(name);
    out.emplace_back(name);
  }
  if (out.empty()) throw ParameterError("no meta-paths selected");
  return out;
}

inline ModelConfig model_config(const RunConfig& c, std::size_t input_dim) {
  ModelConfig m;
  m.input_dim = input_dim;
  m.hidden = c.hidden;
  m.heads = c.heads;
  m.semantic_dim = c.semantic_dim;
  m.leaky_slope = c.leaky_slope;
  m.dropout = c.dropout;
  m.activation = parse_activation(c.activation);
  if (c.reduce != "mean" && c.reduce != "sum") throw ParameterError("model.reduce must be mean or sum");
  m.reduce = c.reduce == "sum" ? SemanticReduce::Sum : SemanticReduce::Mean;
  m.seed = c.seed;
  m.metapaths = metapath_names(c);
  m.validate();
  return m;
}

inline TrainOptions train_options(const RunConfig& c) {
  TrainOptions t;
  t.adam.learning_rate = c.lr;
  t.adam.weight_decay = c.weight_decay;
  t.max_epochs = c.epochs;
  t.patience = c.patience;
  t.batch_size = c.batch_size;
  t.seed = c.seed;
  return t;
}

inline RegistryMode registry_mode(const RunConfig& c) {
  if (c.registry == "discover") return RegistryMode::Discover;
  if (c.registry == "strict") return RegistryMode::Strict;
  throw ParameterError("graph.registry must be discover or strict");
}

/// HIN, initial features and the input files they came from.
struct LoadedData {
  Hin hin;
  FeatureMatrix features;
  std::optional<Vocabulary> vocabulary;
  std::vector<fs::path> inputs;
};

/// Loads every configured input in a fixed order (SMILES, fingerprints, T, C,
/// P, DDI) so registry indices are reproducible. In strict mode the drug set
/// comes from the SMILES/fingerprint files, relation files may not introduce
/// new drugs or proteins outside T, and the PPI file is taken as given
/// (both directions must be listed). Without `with_features` the feature
/// matrix is left empty.
inline LoadedData load_data(const RunConfig& c, bool with_features = true) {
  LoadedData d;
  const auto mode = registry_mode(c);
  const bool strict = mode == RegistryMode::Strict;
  auto& reg = d.hin.registry;

  std::vector<SmilesRecord> smiles;
  if (!c.smiles.empty()) {
    d.inputs.push_back(c.resolve(c.smiles));
    smiles = load_smiles(c.resolve(c.smiles), reg);
  }
  std::optional<FingerprintData> fingerprints;
  if (!c.fingerprints.empty()) {
    d.inputs.push_back(c.resolve(c.fingerprints));
    fingerprints = load_fingerprints(c.resolve(c.fingerprints), reg);
    d.hin.has = fingerprints->has;
  }
  const auto drug_mode = strict && reg.count(EntityKind::Drug) > 0 ? RegistryMode::Strict : RegistryMode::Discover;
  if (!c.drug_protein.empty()) {
    d.inputs.push_back(c.resolve(c.drug_protein));
    std::ifstream in(c.resolve(c.drug_protein));
    if (!in) throw IoError("cannot open relation file '" + c.resolve(c.drug_protein).string() + "'");
    // Drugs strict, proteins discovered.
    d.hin.targets = RelationMatrix(EntityKind::Drug, EntityKind::Protein);
    io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
      const auto f = io::split(line, '\t');
      if (f.size() != 2 || io::trim(f[0]).empty() || io::trim(f[1]).empty()) {
        throw ParseError(c.drug_protein + ": line " + std::to_string(number) + ": expected two tab-separated identifiers", number);
      }
      try {
        d.hin.targets.insert(reg.intern(EntityKind::Drug, io::trim(f[0]), drug_mode),
                             reg.intern(EntityKind::Protein, io::trim(f[1])));
      } catch (const SchemaError& e) {
        throw SchemaError(c.drug_protein + ": line " + std::to_string(number) + ": " + e.what());
      }
    });
    d.hin.targets.normalize();
  }
  if (!c.drug_side_effect.empty()) {
    d.inputs.push_back(c.resolve(c.drug_side_effect));
    std::ifstream in(c.resolve(c.drug_side_effect));
    if (!in) throw IoError("cannot open relation file '" + c.resolve(c.drug_side_effect).string() + "'");
    io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
      const auto f = io::split(line, '\t');
      if (f.size() != 2 || io::trim(f[0]).empty() || io::trim(f[1]).empty()) {
        throw ParseError(c.drug_side_effect + ": line " + std::to_string(number) + ": expected two tab-separated identifiers", number);
      }
      try {
        d.hin.causes.insert(reg.intern(EntityKind::Drug, io::trim(f[0]), drug_mode),
                            reg.intern(EntityKind::SideEffect, io::trim(f[1])));
      } catch (const SchemaError& e) {
        throw SchemaError(c.drug_side_effect + ": line " + std::to_string(number) + ": " + e.what());
      }
    });
    d.hin.causes.normalize();
  }
  if (!c.ppi.empty()) {
    d.inputs.push_back(c.resolve(c.ppi));
    if (strict) {
      std::ifstream in(c.resolve(c.ppi));
      if (!in) throw IoError("cannot open relation file '" + c.resolve(c.ppi).string() + "'");
      io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
        const auto f = io::split(line, '\t');
        if (f.size() != 2) throw ParseError(c.ppi + ": line " + std::to_string(number) + ": expected two identifiers", number);
        try {
          d.hin.interacts.insert(reg.intern(EntityKind::Protein, io::trim(f[0]), mode),
                                 reg.intern(EntityKind::Protein, io::trim(f[1]), mode));
        } catch (const SchemaError& e) {
          throw SchemaError(c.ppi + ": line " + std::to_string(number) + ": " + e.what());
        }
      });
      d.hin.interacts.normalize();
    } else {
      d.hin.interacts = load_relation(c.resolve(c.ppi), EntityKind::Protein, EntityKind::Protein, reg);
    }
  }
  if (!c.ddi.empty()) {
    d.inputs.push_back(c.resolve(c.ddi));
    d.hin.ddis = load_ddis(c.resolve(c.ddi), reg, drug_mode);
  }

  const std::size_t n = reg.count(EntityKind::Drug);
  if (!with_features) return d;
  if (c.features == "espf") {
    if (smiles.empty()) throw ParameterError("features.mode=espf needs a SMILES file");
    auto espf = espf_features(smiles, n, c.espf_threshold, c.espf_max_size);
    d.features = espf.features;
    d.vocabulary = std::move(espf.vocabulary);
  } else if (c.features == "fingerprint") {
    if (!fingerprints) throw ParameterError("features.mode=fingerprint needs a fingerprint file");
    d.features = pad_rows(fingerprints->features, n);
  } else {
    throw ParameterError("features.mode must be espf or fingerprint");
  }
  return d;
}

inline std::vector<NeighborGraph> build_graphs(const RunConfig& c, const Hin& hin) {
  std::vector<MetaPathSpec> specs;
  for (const auto& name : metapath_names(c)) specs.push_back(builtin_spec(name));
  return neighbor_graphs(hin, specs, c.neighbor_threshold);
}

inline SplitBundle make_split(const RunConfig& c, const Hin& hin) {
  if (c.protocol == "edges") {
    return split_edges(hin.drug_count(), hin.ddis, {c.train_ratio, c.val_ratio, c.test_ratio}, c.seed);
  }
  if (c.protocol == "coldstart") return split_cold_start(hin.drug_count(), hin.ddis, c.drug_fraction, c.seed);
  throw ParameterError("split.protocol must be edges or coldstart");
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

/// Run record written last, next to the command's artifacts.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config)
      : command_(std::move(command)), config_(config), start_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void inputs(const std::vector<fs::path>& ps) { inputs_.insert(inputs_.end(), ps.begin(), ps.end()); }
  void artifact(const fs::path& p) { artifacts_.push_back(p); }
  nlohmann::json& extra() { return extra_; }

  /// Writes `path` atomically and records it as an artifact.
  void write(const fs::path& path, std::string_view contents) {
    io::write_file_atomic(path, contents);
    artifact(path);
  }

  void finish(const fs::path& dir) const {
    nlohmann::json j;
    j["command"] = command_;
    j["seed"] = config_.seed;
    j["config"] = config_.echo();
    nlohmann::json ins = nlohmann::json::object();
    for (const auto& p : inputs_) ins[p.string()] = sha256_hex(io::read_file(p));
    j["inputs"] = ins;
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& p : artifacts_) arts[p.string()] = sha256_hex(io::read_file(p));
    j["artifacts"] = arts;
    if (!extra_.is_null()) j["details"] = extra_;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig config_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> artifacts_;
  nlohmann::json extra_;
};

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code; errors propagate as
// exceptions.

inline int cmd_synth(const fs::path& dir, const PlantedOptions& options) {
  write_planted(dir, generate_planted(options), options.seed);
  return 0;
}

inline int cmd_build_graph(const RunConfig& c, std::ostream& log) {
  const auto dir = c.output_dir() / "graph";
  Manifest manifest("build-graph", c);
  auto data = load_data(c, false);
  manifest.inputs(data.inputs);
  const auto& hin = data.hin;
  manifest.write(dir / "registry.tsv", hin.registry.dump());
  manifest.write(dir / "T.tsv", serialize_relation(hin.targets, hin.registry));
  manifest.write(dir / "C.tsv", serialize_relation(hin.causes, hin.registry));
  manifest.write(dir / "H.tsv", serialize_relation(hin.has, hin.registry));
  manifest.write(dir / "P.tsv", serialize_relation(hin.interacts, hin.registry));
  manifest.write(dir / "ddi.tsv", serialize_ddis(hin.ddis, hin.registry));
  manifest.write(dir / "stats.tsv", stats(hin).to_tsv());
  const auto report = validate(hin);
  manifest.write(dir / "validation.txt", report.to_text());
  manifest.finish(dir);
  log << stats(hin).to_tsv() << report.to_text();
  if (!report.passed() && registry_mode(c) == RegistryMode::Strict) return 1;
  return 0;
}

inline int cmd_metapaths(const RunConfig& c, std::ostream& log) {
  const auto dir = c.output_dir() / "metapaths";
  Manifest manifest("metapaths", c);
  auto data = load_data(c, false);
  manifest.inputs(data.inputs);
  for (const auto& name : metapath_names(c)) {
    const auto spec = builtin_spec(name);
    const auto m = commuting_matrix(data.hin, spec);
    manifest.write(dir / (name + ".tsv"), m.to_tsv(data.hin.registry));
    log << name << '\t' << spec.signature() << '\t' << m.entries.size() << " nonzeros\n";
  }
  manifest.finish(dir);
  return 0;
}

inline int cmd_featurize(const RunConfig& c, std::ostream& log) {
  const auto dir = c.output_dir() / "features";
  Manifest manifest("featurize", c);
  auto data = load_data(c);
  manifest.inputs(data.inputs);
  if (data.vocabulary) manifest.write(dir / "vocabulary.txt", data.vocabulary->dump());
  manifest.write(dir / "features.tsv", data.features.to_tsv(data.hin.registry));
  manifest.finish(dir);
  log << "d0\t" << data.features.cols << '\n';
  return 0;
}

namespace detail {

inline std::string metrics_block(const std::string& prefix, const Metrics& m) {
  std::istringstream in(m.to_text());
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) out << prefix << '.' << line << '\n';
  return out.str();
}

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["auroc"] = m.auroc ? nlohmann::json(*m.auroc) : nlohmann::json(nullptr);
  j["threshold"] = m.threshold;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  return j;
}

template <std::floating_point T>
int train_variant(const RunConfig& c, Variant variant, const std::string& command, const fs::path& dir, std::ostream& log) {
  Manifest manifest(command, c);
  auto data = load_data(c);
  manifest.inputs(data.inputs);
  const auto graphs = build_graphs(c, data.hin);
  const auto bundle = make_split(c, data.hin);
  for (const auto& w : bundle.warnings) log << "warning: " << w << '\n';
  const auto config = model_config(c, data.features.cols);
  const auto features = data.features.to_tensor<T>();
  ModelInputs<T> inputs{features, graphs};
  auto options = train_options(c);
  options.variant = variant;

  auto result = train(config, init_params<T>(config), bundle, inputs, options);
  const auto* fixed = variant == Variant::FixedNodeAttention ? &result.fixed_attention : nullptr;
  const auto train_m = evaluate_pairs(config, result.best, inputs, bundle.train, variant, fixed);
  const auto val_m = evaluate_pairs(config, result.best, inputs, bundle.validation, variant, fixed);
  const auto test_m = evaluate_pairs(config, result.best, inputs, bundle.test, variant, fixed);

  if (variant == Variant::Full) manifest.write(dir / "checkpoint.bin", encode_checkpoint(config, result.best));
  manifest.write(dir / "history.tsv", result.history.to_tsv());
  manifest.write(dir / "metrics.tsv", metrics_block("train", train_m) + metrics_block("validation", val_m) +
                                          metrics_block("test", test_m));
  nlohmann::json summary;
  summary["config"] = c.echo();
  summary["seed"] = c.seed;
  summary["variant"] = variant_name(variant);
  summary["protocol"] = protocol_name(bundle.protocol);
  summary["held_out_drugs"] = bundle.held_out.size();
  summary["best_epoch"] = result.history.best_epoch;
  summary["stopping_epoch"] = result.history.stopping_epoch;
  summary["beta"] = result.beta;
  summary["train"] = metrics_json(train_m);
  summary["validation"] = metrics_json(val_m);
  summary["test"] = metrics_json(test_m);
  manifest.write(dir / "summary.json", summary.dump(2) + "\n");
  manifest.extra()["variant"] = variant_name(variant);
  manifest.extra()["beta"] = result.beta;
  if (variant == Variant::UniformMetapath) manifest.extra()["beta_fixed"] = "1/T";
  manifest.finish(dir);

  log << "variant\t" << variant_name(variant) << "\nbest_epoch\t" << result.history.best_epoch << "\nstopping_epoch\t"
      << result.history.stopping_epoch << '\n'
      << metrics_block("test", test_m);
  return 0;
}

}  // namespace detail

inline int cmd_train(const RunConfig& c, std::ostream& log) {
  const auto dir = c.output_dir() / "train";
  if (c.precision == 64) return detail::train_variant<double>(c, Variant::Full, "train", dir, log);
  if (c.precision == 32) return detail::train_variant<float>(c, Variant::Full, "train", dir, log);
  throw ParameterError("precision must be 32 or 64");
}

inline Variant parse_variant(std::string_view name) {
  if (name == "MP") return Variant::FixedNodeAttention;
  if (name == "N") return Variant::UniformMetapath;
  throw ParameterError("ablation variant must be MP or N");
}

inline int cmd_ablate(const RunConfig& c, Variant variant, std::ostream& log) {
  const auto dir = c.output_dir() / (std::string("ablate-") + variant_name(variant));
  if (c.precision == 64) return detail::train_variant<double>(c, variant, "ablate", dir, log);
  if (c.precision == 32) return detail::train_variant<float>(c, variant, "ablate", dir, log);
  throw ParameterError("precision must be 32 or 64");
}

namespace detail {

inline fs::path checkpoint_path(const RunConfig& c) {
  return c.checkpoint.empty() ? c.output_dir() / "train" / "checkpoint.bin" : c.resolve(c.checkpoint);
}

template <std::floating_point T>
int evaluate_with(const RunConfig& c, const std::string& blob, std::ostream& log) {
  const auto dir = c.output_dir() / "evaluate";
  Manifest manifest("evaluate", c);
  const auto ck = decode_checkpoint<T>(blob);
  auto data = load_data(c);
  manifest.inputs(data.inputs);
  manifest.input(checkpoint_path(c));
  if (ck.config.input_dim != data.features.cols) {
    throw SchemaError("checkpoint expects " + std::to_string(ck.config.input_dim) + " input features, data has " +
                      std::to_string(data.features.cols));
  }
  RunConfig graph_cfg = c;
  std::string names;
  for (const auto& n : ck.config.metapaths) names += (names.empty() ? "" : ",") + n;
  graph_cfg.metapaths = names;
  const auto graphs = build_graphs(graph_cfg, data.hin);
  const auto bundle = make_split(c, data.hin);
  const auto features = data.features.to_tensor<T>();
  const auto m = evaluate_pairs(ck.config, ck.params, ModelInputs<T>{features, graphs}, bundle.test);
  manifest.write(dir / "metrics.tsv", m.to_text());
  nlohmann::json summary;
  summary["config"] = c.echo();
  summary["seed"] = c.seed;
  summary["protocol"] = protocol_name(bundle.protocol);
  summary["test_pairs"] = bundle.test.size();
  summary["test"] = metrics_json(m);
  manifest.write(dir / "summary.json", summary.dump(2) + "\n");
  manifest.finish(dir);
  log << m.to_text();
  return 0;
}

template <std::floating_point T>
int predict_with(const RunConfig& c, const std::string& blob, std::ostream& log) {
  const auto dir = c.output_dir() / "predict";
  Manifest manifest("predict", c);
  const auto ck = decode_checkpoint<T>(blob);
  auto data = load_data(c);
  manifest.inputs(data.inputs);
  manifest.input(checkpoint_path(c));
  if (ck.config.input_dim != data.features.cols) {
    throw SchemaError("checkpoint expects " + std::to_string(ck.config.input_dim) + " input features, data has " +
                      std::to_string(data.features.cols));
  }
  if (c.pairs.empty()) throw ParameterError("predict needs a pair list (data.pairs)");
  const auto pair_path = c.resolve(c.pairs);
  manifest.input(pair_path);
  std::ifstream in(pair_path);
  if (!in) throw IoError("cannot open pair list '" + pair_path.string() + "'");
  std::vector<DrugPair> pairs;
  std::vector<std::pair<std::string, std::string>> names;
  io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
    const auto f = io::split(line, '\t');
    if (f.size() < 2) throw ParseError("pair list line " + std::to_string(number) + ": expected two drug ids", number);
    const auto a = io::trim(f[0]), b = io::trim(f[1]);
    const auto ia = data.hin.registry.find(EntityKind::Drug, a);
    const auto ib = data.hin.registry.find(EntityKind::Drug, b);
    if (!ia) throw SchemaError("pair list line " + std::to_string(number) + ": unknown drug id '" + std::string(a) + "'");
    if (!ib) throw SchemaError("pair list line " + std::to_string(number) + ": unknown drug id '" + std::string(b) + "'");
    if (*ia == *ib) throw ContractError("pair list line " + std::to_string(number) + ": self pair '" + std::string(a) + "'");
    pairs.emplace_back(*ia, *ib);
    names.emplace_back(a, b);
  });
  RunConfig graph_cfg = c;
  std::string mp;
  for (const auto& n : ck.config.metapaths) mp += (mp.empty() ? "" : ",") + n;
  graph_cfg.metapaths = mp;
  const auto graphs = build_graphs(graph_cfg, data.hin);
  const auto features = data.features.to_tensor<T>();
  const auto scores = predict_scores(ck.config, ck.params, ModelInputs<T>{features, graphs}, pairs);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::ostringstream os;
  for (auto k : order) os << names[k].first << '\t' << names[k].second << '\t' << io::format_number(scores[k]) << '\n';
  manifest.write(dir / "scores.tsv", os.str());
  manifest.finish(dir);
  log << "scored\t" << pairs.size() << '\n';
  return 0;
}

}  // namespace detail

inline int cmd_evaluate(const RunConfig& c, std::ostream& log) {
  const auto blob = io::read_file(detail::checkpoint_path(c));
  return checkpoint_precision(blob) == 8 ? detail::evaluate_with<double>(c, blob, log)
                                         : detail::evaluate_with<float>(c, blob, log);
}

inline int cmd_predict(const RunConfig& c, std::ostream& log) {
  const auto blob = io::read_file(detail::checkpoint_path(c));
  return checkpoint_precision(blob) == 8 ? detail::predict_with<double>(c, blob, log)
                                         : detail::predict_with<float>(c, blob, log);
}

struct GradCheckRun {
  GradCheckReport report;
  std::vector<std::string> tensor_names;
  double loss = 0.0;
};

/// Finite-difference check of the full model (training-mode forward with a
/// fixed dropout mask, summed BCE on the training pairs) on a small planted
/// HIN generated from `c.seed`, in 64-bit precision.
inline GradCheckRun run_gradcheck(const RunConfig& c) {
  PlantedOptions synth;
  synth.drugs = c.gradcheck_drugs;
  synth.proteins = std::max<std::size_t>(3, c.gradcheck_drugs / 3);
  synth.side_effects = 10;
  synth.side_effect_density = 0.25;
  synth.smiles_min_tokens = 8;
  synth.smiles_max_tokens = 20;
  synth.seed = c.seed;
  const auto files = generate_planted(synth);
  Hin hin;
  std::istringstream smiles_in(files.smiles), fp_in(files.fingerprints), dp_in(files.drug_protein),
      ds_in(files.drug_side_effect), ppi_in(files.ppi), ddi_in(files.ddi);
  const auto smiles = load_smiles(smiles_in, hin.registry);
  hin.has = load_fingerprints(fp_in, hin.registry).has;
  hin.targets = load_relation(dp_in, EntityKind::Drug, EntityKind::Protein, hin.registry);
  hin.causes = load_relation(ds_in, EntityKind::Drug, EntityKind::SideEffect, hin.registry);
  hin.interacts = load_relation(ppi_in, EntityKind::Protein, EntityKind::Protein, hin.registry);
  hin.ddis = load_ddis(ddi_in, hin.registry);
  const auto espf = espf_features(smiles, hin.drug_count(), 2, 64);

  const auto graphs = build_graphs(c, hin);
  const auto config = model_config(c, espf.features.cols);
  auto params = init_params<double>(config);
  const auto bundle = split_edges(hin.drug_count(), hin.ddis, {1.0, 0.0, 0.0}, c.seed);
  const auto pairs = pairs_of(bundle.train);
  const auto labels = labels_of<double>(bundle.train);
  const auto features = espf.features.to_tensor<double>();
  ForwardOptions<double> opts;
  opts.training = true;
  opts.dropout_seed = derive_seed(c.seed, Stream::Dropout);

  auto pass = forward(config, params, features, graphs, pairs, opts);
  auto loss = bce_loss(pass.logits, std::span<const double>(labels));
  if (!c.inject_fault.empty()) pass.tape->perturb_adjoint(c.inject_fault, 1.01);
  pass.tape->backward(loss);
  std::vector<Tensor<double>> analytic;
  for (const auto& p : pass.params) analytic.push_back(pass.tape->grad(p));

  // Reference losses are evaluated in extended precision from the same
  // 64-bit parameters so that difference quotients resolve small gradients.
  using Wide = long double;
  const auto wide_features = features.cast<Wide>();
  const auto wide_labels = labels_of<Wide>(bundle.train);
  ForwardOptions<Wide> wide_opts;
  wide_opts.training = true;
  wide_opts.dropout_seed = opts.dropout_seed;
  auto evaluate_loss = [&]() {
    const auto wide_params = params.cast<Wide>();
    auto probe = forward(config, wide_params, wide_features, graphs, pairs, wide_opts);
    auto l = bce_loss(probe.logits, std::span<const Wide>(wide_labels));
    return ProbeEvaluation{l.value()[0], probe.tape->kink_pattern()};
  };
  GradCheckOptions gc;
  gc.probes_per_tensor = c.gradcheck_probes;
  gc.epsilon = c.gradcheck_epsilon;
  gc.seed = c.seed;
  const auto groups = params.groups();
  GradCheckRun run;
  run.report = finite_diff_check(evaluate_loss, std::span<Tensor<double>>(params.tensors), analytic, groups, gc);
  run.tensor_names = params.names;
  run.loss = loss.value()[0];
  return run;
}

inline int cmd_gradcheck(const RunConfig& c, std::ostream& log) {
  const auto dir = c.output_dir() / "gradcheck";
  Manifest manifest("gradcheck", c);
  const auto run = run_gradcheck(c);
  const bool pass = run.report.max_rel_error < c.gradcheck_tolerance;
  std::ostringstream os;
  os << "status\t" << (pass ? "PASS" : "FAIL") << '\n'
     << "max_rel_error\t" << io::format_number(run.report.max_rel_error) << '\n'
     << "tolerance\t" << io::format_number(c.gradcheck_tolerance) << '\n'
     << "probes\t" << run.report.probes << '\n'
     << "kink_skips\t" << run.report.kink_skips << '\n'
     << "loss\t" << io::format_number(run.loss) << '\n'
     << "group\ttensor\tindex\tanalytic\tnumeric\trel_error\n";
  for (const auto& w : run.report.worst_per_group) {
    os << w.group << '\t' << run.tensor_names[w.tensor] << '\t' << w.index << '\t' << io::format_number(w.analytic)
       << '\t' << io::format_number(w.numeric) << '\t' << io::format_number(w.rel_error) << '\n';
  }
  manifest.write(dir / "report.tsv", os.str());
  manifest.finish(dir);
  log << os.str();
  return pass ? 0 : 1;
}

}  // namespace handdi::cli
