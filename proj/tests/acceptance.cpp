// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "handdi/handdi.hpp"
#include "support.hpp"

using namespace handdi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) { return io::format_number(v); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  cli::RunConfig c;  // 12 drugs, all four meta-paths, 64-bit
  const auto run = cli::run_gradcheck(c);
  const double elapsed = seconds_since(start);
  std::set<std::string> groups;
  for (const auto& w : run.report.worst_per_group) groups.insert(w.group);
  const bool all_groups = groups == std::set<std::string>{"projection", "attention", "W", "b",
                                                         "q"};
  return {run.report.max_rel_error < 1e-5 && elapsed < 30.0 && all_groups,
          "max_rel_error=" + num(run.report.max_rel_error) + " (<1e-05) over " + std::to_string(groups.size()) +
              " parameter groups, " + std::to_string(run.report.probes) + " probes, " + num(elapsed) + " s (<30 s)"};
}

// 2 -------------------------------------------------------------------------

Outcome commuting_oracle() {
  const auto start = Clock::now();
  std::size_t entries = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto hin = random_hin(seed);
    for (const auto& spec : builtin_specs()) {
      const auto m = commuting_matrix(hin, spec);
      for (std::size_t i = 0; i < hin.drug_count(); ++i)
        for (std::size_t j = 0; j < hin.drug_count(); ++j) {
          ++entries;
          mismatches += m.at(i, j) != brute_force_path_count(hin, spec, i, j);
        }
    }
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 10.0, std::to_string(entries) + " entries over 100 HINs x 4 meta-paths, " +
                                                 std::to_string(mismatches) + " mismatches, " + num(elapsed) +
                                                 " s (<10 s)"};
}

// 3 -------------------------------------------------------------------------

Outcome attention_normalization() {
  std::size_t cases = 0, alpha_rows = 0, violations = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; cases < 1000; ++seed) {
    auto hin = random_hin(seed);
    const auto graphs = neighbor_graphs(hin, builtin_specs());
    Rng rng = make_rng(seed, Stream::Synthetic, 3);
    ModelConfig config;
    config.input_dim = 1 + static_cast<std::size_t>(uniform01(rng) * 6);
    config.hidden = 1 + static_cast<std::size_t>(uniform01(rng) * 4);
    config.heads = 1 + static_cast<std::size_t>(uniform01(rng) * 3);
    config.semantic_dim = 1 + static_cast<std::size_t>(uniform01(rng) * 8);
    config.dropout = 0.0;
    config.seed = seed;
    Tensor<double> features(hin.drug_count(), config.input_dim);
    for (auto& v : features.data()) v = 4 * uniform01(rng) - 2;
    auto params = init_params<double>(config);
    for (auto& t : params.tensors)
      for (auto& v : t.data()) v *= 1 + 3 * uniform01(rng);
    const auto pass = forward(config, params, features, graphs, {});
    for (std::size_t v = 0; v < graphs.size(); ++v) {
      const auto& mask = graphs[v].adjacency;
      for (const auto& alpha : pass.attention[v]) {
        for (std::size_t i = 0; i < mask.rows(); ++i) {
          double s = 0;
          for (std::size_t j = 0; j < mask.cols(); ++j) {
            const double a = alpha.value()(i, j);
            if (!mask(i, j) && a != 0.0) ++violations;
            if (a < 0.0) ++violations;
            s += a;
          }
          worst = std::max(worst, std::abs(s - 1.0));
          ++alpha_rows;
        }
      }
    }
    double total = 0;
    for (double b : pass.beta.value().data()) {
      if (b < 0.0) ++violations;
      total += b;
    }
    worst = std::max(worst, std::abs(total - 1.0));
    ++cases;
  }
  return {violations == 0 && worst <= 1e-6, std::to_string(cases) + " randomized models, " +
                                                std::to_string(alpha_rows) + " attention rows, max |sum-1|=" +
                                                num(worst) + " (<=1e-06), " + std::to_string(violations) +
                                                " sign/mask violations"};
}

// 4 -------------------------------------------------------------------------

Outcome auroc_oracle() {
  Rng rng = make_rng(2024, Stream::Synthetic);
  std::size_t mismatches = 0, tied = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 200);
    const int levels = 1 + static_cast<int>(uniform01(rng) * 8);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(uniform01(rng) * levels) / levels;
      y[i] = uniform01(rng) < 0.5;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] && !y[j]) {
          ++pairs;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    const double oracle = wins / static_cast<double>(pairs);
    const double value = auroc(std::span<const double>(s), std::span<const int>(y));
    mismatches += value != oracle;
    tied += levels < static_cast<int>(n);
  }
  return {mismatches == 0, "500 score vectors (" + std::to_string(tied) + " with forced ties), " +
                               std::to_string(mismatches) + " inexact matches"};
}

// 5-7 -----------------------------------------------------------------------

struct PlantedMetrics {
  double train_auroc = 0;
  double test_auroc = 0;
  double seconds = 0;
};

PlantedMetrics run_planted(std::uint64_t seed, const std::string& protocol, Variant variant) {
  handdi::testing::TempDir dir;
  auto c = handdi::testing::planted_config(dir.path(), seed, 50);
  c.protocol = protocol;
  const auto start = Clock::now();
  handdi::testing::Prepared<float> run(c);
  auto options = run.options;
  options.variant = variant;
  auto result = train(run.config, init_params<float>(run.config), run.bundle, run.inputs(), options);
  const auto* fixed = variant == Variant::FixedNodeAttention ? &result.fixed_attention : nullptr;
  PlantedMetrics m;
  m.train_auroc = evaluate_pairs(run.config, result.best, run.inputs(), run.bundle.train, variant, fixed).auroc.value();
  m.test_auroc = evaluate_pairs(run.config, result.best, run.inputs(), run.bundle.test, variant, fixed).auroc.value();
  m.seconds = seconds_since(start);
  return m;
}

const std::uint64_t kSeeds[] = {0, 1, 2};
std::vector<PlantedMetrics> full_edge_runs;

Outcome planted_learning() {
  double train = 0, test = 0, seconds = 0;
  std::ostringstream per_seed;
  for (auto seed : kSeeds) {
    const auto m = run_planted(seed, "edges", Variant::Full);
    full_edge_runs.push_back(m);
    train += m.train_auroc / 3;
    test += m.test_auroc / 3;
    seconds += m.seconds;
    per_seed << " seed" << seed << "=" << num(m.train_auroc) << "/" << num(m.test_auroc);
  }
  return {train >= 0.95 && test >= 0.90 && seconds < 120.0,
          "mean train AUROC=" + num(train) + " (>=0.95), mean test AUROC=" + num(test) + " (>=0.90), " + num(seconds) +
              " s for 3 seeds (<120 s);" + per_seed.str()};
}

Outcome cold_start() {
  double mean = 0, lowest = 1;
  std::ostringstream per_seed;
  for (auto seed : kSeeds) {
    const auto m = run_planted(seed, "coldstart", Variant::Full);
    mean += m.test_auroc / 3;
    lowest = std::min(lowest, m.test_auroc);
    per_seed << " seed" << seed << "=" << num(m.test_auroc);
  }
  return {lowest >= 0.80, "held-out-drug test AUROC min=" + num(lowest) + " mean=" + num(mean) + " (>=0.80);" +
                              per_seed.str()};
}

Outcome ablation_ordering() {
  double full = 0, mp = 0, n = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto f = k < full_edge_runs.size() ? full_edge_runs[k] : run_planted(kSeeds[k], "edges", Variant::Full);
    full += f.test_auroc / 3;
    mp += run_planted(kSeeds[k], "edges", Variant::FixedNodeAttention).test_auroc / 3;
    n += run_planted(kSeeds[k], "edges", Variant::UniformMetapath).test_auroc / 3;
  }
  return {full >= mp && full >= n, "mean test AUROC full=" + num(full) + ", MP=" + num(mp) + ", N=" + num(n) +
                                       " (full >= each)"};
}

// 8 -------------------------------------------------------------------------

Outcome espf_determinism() {
  const std::vector<TokenSequence> fixture{tokenize_smiles("CCO"), tokenize_smiles("CCN")};
  const auto v = build_vocab(fixture, 2, 512);
  const bool traced = !v.merges().empty() && v.merges()[0] == Merge{"C", "C"} &&
                      v.units() == std::vector<std::string>{"C", "N", "O", "CC"};

  PlantedOptions opt;
  opt.drugs = 200;
  opt.seed = 8;
  const auto files = generate_planted(opt);
  auto featurize = [&] {
    EntityRegistry reg;
    std::istringstream in(files.smiles);
    const auto records = load_smiles(in, reg);
    const auto f = espf_features(records, reg.count(EntityKind::Drug), 5, 512);
    return f.vocabulary.dump() + f.features.to_tsv(reg);
  };
  const auto first = featurize(), second = featurize();
  return {traced && first == second, std::string("first merge ") + (v.merges().empty() ? "none" : v.merges()[0].unit()) +
                                         ", vocabulary " + (traced ? "matches" : "differs from") +
                                         " hand trace; 200-drug corpus rerun " +
                                         (first == second ? "byte-identical" : "differs") + " (" +
                                         std::to_string(first.size()) + " bytes)"};
}

// 9 -------------------------------------------------------------------------

Outcome train_determinism() {
  handdi::testing::TempDir root;
  std::vector<std::string> histories, checkpoints;
  for (const char* name : {"a", "b"}) {
    const auto dir = root / name;
    fs::create_directories(dir);
    auto c = handdi::testing::planted_config(dir, 9, 50);
    c.dropout = 0.6;  // exercise the dropout stream
    std::ostringstream log;
    cli::cmd_train(c, log);
    histories.push_back(io::read_file(dir / "out/train/history.tsv"));
    checkpoints.push_back(io::read_file(dir / "out/train/checkpoint.bin"));
  }
  const bool same = histories[0] == histories[1] && checkpoints[0] == checkpoints[1];
  return {same, "history sha256 " + cli::sha256_hex(histories[0]).substr(0, 12) + " vs " +
                    cli::sha256_hex(histories[1]).substr(0, 12) + ", checkpoint sha256 " +
                    cli::sha256_hex(checkpoints[0]).substr(0, 12) + " vs " + cli::sha256_hex(checkpoints[1]).substr(0, 12)};
}

// 10 ------------------------------------------------------------------------

template <class T>
std::size_t roundtrip_mismatches(std::size_t& asymmetric, std::size_t& scored) {
  handdi::testing::TempDir dir;
  auto c = handdi::testing::planted_config(dir.path(), 10, 30);
  c.epochs = 20;
  handdi::testing::Prepared<T> run(c);
  auto result = train(run.config, init_params<T>(run.config), run.bundle, run.inputs(), run.options);
  save_checkpoint(dir / "ck.bin", run.config, result.best);
  const auto ck = load_checkpoint<T>(dir / "ck.bin");

  const std::size_t n = run.features.rows();
  std::vector<DrugPair> forward_pairs, reverse_pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        forward_pairs.emplace_back(i, j);
        reverse_pairs.emplace_back(j, i);
      }
  const auto before = predict_scores(run.config, result.best, run.inputs(), forward_pairs);
  const auto reversed = predict_scores(run.config, result.best, run.inputs(), reverse_pairs);
  const auto after = predict_scores(ck.config, ck.params, run.inputs(), forward_pairs);
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < before.size(); ++k) {
    asymmetric += std::memcmp(&before[k], &reversed[k], sizeof(T)) != 0;
    mismatches += std::memcmp(&before[k], &after[k], sizeof(T)) != 0;
  }
  scored += before.size();
  return mismatches;
}

Outcome symmetry_and_roundtrip() {
  std::size_t asymmetric = 0, scored = 0;
  const auto mismatches = roundtrip_mismatches<float>(asymmetric, scored) + roundtrip_mismatches<double>(asymmetric, scored);
  return {asymmetric == 0 && mismatches == 0,
          std::to_string(scored) + " ordered pairs at 32 and 64 bit: " + std::to_string(asymmetric) +
              " asymmetric scores, " + std::to_string(mismatches) + " scores changed by save/load"};
}

}  // namespace

int main() {
  report(1, "gradient correctness", gradient_correctness);
  report(2, "commuting-matrix oracle", commuting_oracle);
  report(3, "attention normalization", attention_normalization);
  report(4, "AUROC oracle", auroc_oracle);
  report(5, "planted-signal learning", planted_learning);
  report(6, "cold-start inductivity", cold_start);
  report(7, "ablation ordering", ablation_ordering);
  report(8, "ESPF determinism", espf_determinism);
  report(9, "end-to-end determinism", train_determinism);
  report(10, "decoder symmetry and checkpoint round-trip", symmetry_and_roundtrip);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
