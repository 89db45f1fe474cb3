#pragma once

#include <random>
#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "handdi/espf.hpp"
#include "handdi/hin.hpp"
#include "handdi/io.hpp"
#include "handdi/random.hpp"

namespace handdi {

/// Synthetic HIN whose interactions hold exactly when two drugs share a
/// target protein. All other relations and the SMILES strings are random
/// noise with respect to the labels.
struct PlantedOptions {
  std::size_t drugs = 50;
  std::size_t proteins = 16;
  std::size_t side_effects = 40;
  double second_target_probability = 0.25;
  double ppi_density = 0.1;
  double side_effect_density = 0.1;
  double fingerprint_density = 0.15;
  std::size_t smiles_min_tokens = 12;
  std::size_t smiles_max_tokens = 40;
  std::uint64_t seed = 0;
};

/// Text contents of every input file of a planted dataset.
struct PlantedFiles {
  std::string smiles;
  std::string fingerprints;
  std::string drug_protein;
  std::string drug_side_effect;
  std::string ppi;
  std::string ddi;
};

inline std::string synthetic_drug_id(std::size_t i) {
  std::string digits = std::to_string(i);
  return "DB" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

namespace detail {

inline std::string random_smiles(Rng& rng, std::size_t min_tokens, std::size_t max_tokens) {
  static const char* const kAtoms[] = {"C", "C", "C", "C", "N", "O", "c", "c", "Cl", "Br", "S", "F", "[nH]", "[O-]"};
  static const char* const kBonds[] = {"", "", "", "=", "#"};
  std::uniform_int_distribution<std::size_t> len(min_tokens, max_tokens);
  std::uniform_int_distribution<std::size_t> atom(0, std::size(kAtoms) - 1);
  std::uniform_int_distribution<std::size_t> bond(0, std::size(kBonds) - 1);
  const std::size_t n = len(rng);
  std::string s = kAtoms[atom(rng)];
  int open = 0;
  for (std::size_t t = 1; t < n; ++t) {
    const double u = uniform01(rng);
    if (u < 0.1) {
      s += '(';
      ++open;
    } else if (u < 0.2 && open > 0) {
      s += ')';
      --open;
    }
    s += kBonds[bond(rng)];
    s += kAtoms[atom(rng)];
  }
  while (open-- > 0) s += ')';
  return s;
}

}  // namespace detail

inline PlantedFiles generate_planted(const PlantedOptions& opt) {
  Rng rng = make_rng(opt.seed, Stream::Synthetic);
  std::uniform_int_distribution<std::size_t> protein(0, opt.proteins - 1);
  auto pid = [](std::size_t p) { return "P" + std::to_string(p); };
  auto sid = [](std::size_t s) { return "SE" + std::to_string(s); };

  PlantedFiles files;
  std::ostringstream smiles, fps, dp, ds, ppi, ddi;
  std::vector<std::set<std::size_t>> targets(opt.drugs);
  for (std::size_t d = 0; d < opt.drugs; ++d) {
    targets[d].insert(protein(rng));
    if (uniform01(rng) < opt.second_target_probability) targets[d].insert(protein(rng));
    for (auto p : targets[d]) dp << synthetic_drug_id(d) << '\t' << pid(p) << '\n';
  }
  for (std::size_t d = 0; d < opt.drugs; ++d) {
    bool any = false;
    for (std::size_t s = 0; s < opt.side_effects; ++s) {
      if (uniform01(rng) < opt.side_effect_density) {
        ds << synthetic_drug_id(d) << '\t' << sid(s) << '\n';
        any = true;
      }
    }
    if (!any) ds << synthetic_drug_id(d) << '\t' << sid(d % opt.side_effects) << '\n';
  }
  for (std::size_t a = 0; a < opt.proteins; ++a)
    for (std::size_t b = a + 1; b < opt.proteins; ++b)
      if (uniform01(rng) < opt.ppi_density) ppi << pid(a) << '\t' << pid(b) << '\n';
  for (std::size_t d = 0; d < opt.drugs; ++d) {
    smiles << synthetic_drug_id(d) << '\t' << detail::random_smiles(rng, opt.smiles_min_tokens, opt.smiles_max_tokens)
           << '\n';
    fps << synthetic_drug_id(d) << '\t';
    for (std::size_t b = 0; b < kFingerprintBits; ++b) fps << (uniform01(rng) < opt.fingerprint_density ? '1' : '0');
    fps << '\n';
  }
  for (std::size_t a = 0; a < opt.drugs; ++a) {
    for (std::size_t b = a + 1; b < opt.drugs; ++b) {
      const bool shared = std::any_of(targets[a].begin(), targets[a].end(), [&](auto p) { return targets[b].contains(p); });
      if (shared) ddi << synthetic_drug_id(a) << '\t' << synthetic_drug_id(b) << '\n';
    }
  }
  files.smiles = smiles.str();
  files.fingerprints = fps.str();
  files.drug_protein = dp.str();
  files.drug_side_effect = ds.str();
  files.ppi = ppi.str();
  files.ddi = ddi.str();
  return files;
}

/// Writes the planted files under `dir` plus a config.ini pointing at them.
inline void write_planted(const std::filesystem::path& dir, const PlantedFiles& files, std::uint64_t seed) {
  io::write_file_atomic(dir / "smiles.tsv", files.smiles);
  io::write_file_atomic(dir / "fingerprints.tsv", files.fingerprints);
  io::write_file_atomic(dir / "drug_protein.tsv", files.drug_protein);
  io::write_file_atomic(dir / "drug_side_effect.tsv", files.drug_side_effect);
  io::write_file_atomic(dir / "ppi.tsv", files.ppi);
  io::write_file_atomic(dir / "ddi.tsv", files.ddi);
  std::ostringstream cfg;
  cfg << "# planted synthetic dataset: interactions hold iff drugs share a target protein\n"
      << "seed = " << seed << "\n\n"
      << "[data]\n"
      << "smiles = smiles.tsv\n"
      << "fingerprints = fingerprints.tsv\n"
      << "drug_protein = drug_protein.tsv\n"
      << "drug_side_effect = drug_side_effect.tsv\n"
      << "ppi = ppi.tsv\n"
      << "ddi = ddi.tsv\n"
      << "output = out\n\n"
      << "[model]\n"
      << "dropout = 0\n";
  io::write_file_atomic(dir / "config.ini", cfg.str());
}

/// Random in-memory HIN with every relation filled at the given densities.
/// Entity counts are drawn from [1, max_entities] per kind.
struct RandomHinOptions {
  std::size_t max_entities = 20;
  double targets_density = 0.25;
  double causes_density = 0.2;
  double has_density = 0.2;
  double ppi_density = 0.3;
};

inline Hin random_hin(std::uint64_t seed, const RandomHinOptions& opt = {}) {
  Rng rng = make_rng(seed, Stream::Synthetic, 1);
  std::uniform_int_distribution<std::size_t> size(1, opt.max_entities);
  Hin hin;
  auto& reg = hin.registry;
  const std::array<const char*, 4> prefix = {"D", "P", "S", "MACCS_"};
  for (auto k : kAllEntityKinds) {
    const std::size_t n = size(rng);
    for (std::size_t i = 0; i < n; ++i) reg.intern(k, prefix[static_cast<std::size_t>(k)] + std::to_string(i));
  }
  auto fill = [&](RelationMatrix& m, double density) {
    for (std::size_t r = 0; r < reg.count(m.source); ++r)
      for (std::size_t c = 0; c < reg.count(m.target); ++c)
        if (uniform01(rng) < density) m.insert(r, c);
    m.normalize();
  };
  fill(hin.targets, opt.targets_density);
  fill(hin.causes, opt.causes_density);
  fill(hin.has, opt.has_density);
  const std::size_t proteins = reg.count(EntityKind::Protein);
  for (std::size_t a = 0; a < proteins; ++a)
    for (std::size_t b = a + 1; b < proteins; ++b)
      if (uniform01(rng) < opt.ppi_density) hin.interacts.insert(a, b);
  hin.interacts.symmetrize();
  return hin;
}

}  // namespace handdi
