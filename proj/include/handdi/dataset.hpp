#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/hin.hpp"
#include "handdi/random.hpp"

namespace handdi {

struct LabeledPair {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  int label = 0;

  DrugPair pair() const { return {i, j}; }
  friend auto operator<=>(const LabeledPair&, const LabeledPair&) = default;
};

enum class SplitProtocol { Edges, ColdStart };

inline const char* protocol_name(SplitProtocol p) { return p == SplitProtocol::Edges ? "edges" : "coldstart"; }

struct SplitBundle {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> validation;
  std::vector<LabeledPair> test;
  SplitProtocol protocol = SplitProtocol::Edges;
  std::vector<std::size_t> held_out;  // cold-start only, sorted
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

inline std::vector<DrugPair> pairs_of(std::span<const LabeledPair> pairs) {
  std::vector<DrugPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.pair());
  return out;
}

template <class T>
std::vector<T> labels_of(std::span<const LabeledPair> pairs) {
  std::vector<T> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(static_cast<T>(p.label));
  return out;
}

/// Admissibility filter on candidate negative pairs; empty means all pairs.
using PairFilter = std::function<bool(const DrugPair&)>;

/// Uniform sample without replacement of `count` unordered drug pairs that are
/// neither positives nor excluded (and pass `allowed`). Returned sorted, all
/// labelled 0.
inline std::vector<LabeledPair> sample_negatives(std::size_t drug_count, std::span<const DrugPair> positives,
                                                 std::size_t count, Rng& rng, const std::set<DrugPair>& exclude = {},
                                                 const PairFilter& allowed = {}) {
  if (count == 0) return {};
  std::set<DrugPair> blocked(positives.begin(), positives.end());
  blocked.insert(exclude.begin(), exclude.end());
  auto admissible = [&](const DrugPair& p) { return !blocked.contains(p) && (!allowed || allowed(p)); };

  std::vector<DrugPair> chosen;
  const std::size_t total_pairs = drug_count < 2 ? 0 : drug_count * (drug_count - 1) / 2;
  if (total_pairs <= 4'000'000) {
    std::vector<DrugPair> candidates;
    for (std::size_t a = 0; a < drug_count; ++a)
      for (std::size_t b = a + 1; b < drug_count; ++b)
        if (admissible({a, b})) candidates.emplace_back(a, b);
    if (count > candidates.size()) {
      throw ContractError("sample_negatives: requested " + std::to_string(count) + " negatives but only " +
                          std::to_string(candidates.size()) + " pairs are available");
    }
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
      std::swap(candidates[k], candidates[pick(rng)]);
    }
    chosen.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    // Rejection sampling for large drug sets; feasibility is not checked
    // beyond a bounded number of attempts.
    std::set<DrugPair> taken;
    std::uniform_int_distribution<std::size_t> drug(0, drug_count - 1);
    std::size_t attempts = 0;
    while (taken.size() < count) {
      if (++attempts > 200 * count + 1000) throw ContractError("sample_negatives: could not find enough negatives");
      const auto a = drug(rng), b = drug(rng);
      if (a == b) continue;
      const auto p = canonical_pair(a, b);
      if (admissible(p)) taken.insert(p);
    }
    chosen.assign(taken.begin(), taken.end());
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledPair> out;
  out.reserve(chosen.size());
  for (const auto& [a, b] : chosen) out.push_back({a, b, 0});
  return out;
}

inline std::vector<LabeledPair> sample_negatives(const Hin& hin, std::size_t count, Rng& rng,
                                                 const std::set<DrugPair>& exclude = {}) {
  return sample_negatives(hin.drug_count(), hin.ddis, count, rng, exclude);
}

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

namespace detail {

inline std::vector<LabeledPair> as_positive(std::span<const DrugPair> pairs) {
  std::vector<LabeledPair> out;
  for (const auto& [a, b] : pairs) out.push_back({a, b, 1});
  return out;
}

inline void add_negatives(std::vector<LabeledPair>& part, std::size_t drug_count, std::span<const DrugPair> positives,
                          std::set<DrugPair>& used, Rng& rng, const PairFilter& allowed) {
  const std::size_t n_pos = part.size();
  auto negatives = sample_negatives(drug_count, positives, n_pos, rng, used, allowed);
  for (const auto& p : negatives) used.insert(p.pair());
  part.insert(part.end(), negatives.begin(), negatives.end());
}

}  // namespace detail

/// Random-edge ("existing drugs") split: positives shuffled and partitioned by
/// ratio, then one sampled negative per positive in each partition, negatives
/// disjoint across partitions.
inline SplitBundle split_edges(std::size_t drug_count, std::span<const DrugPair> ddis, SplitRatios ratios,
                               std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ParameterError("split ratios must be nonnegative and sum to 1");
  }
  Rng split_rng = make_rng(seed, Stream::Split);
  Rng neg_rng = make_rng(seed, Stream::Negatives);
  std::vector<DrugPair> positives(ddis.begin(), ddis.end());
  std::shuffle(positives.begin(), positives.end(), split_rng);
  const std::size_t n = positives.size();
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
  const auto n_val = std::min(n - n_test, static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(n))));
  const std::size_t n_train = n - n_test - n_val;

  SplitBundle bundle;
  bundle.protocol = SplitProtocol::Edges;
  bundle.seed = seed;
  std::span<const DrugPair> all(positives);
  bundle.train = detail::as_positive(all.subspan(0, n_train));
  bundle.validation = detail::as_positive(all.subspan(n_train, n_val));
  bundle.test = detail::as_positive(all.subspan(n_train + n_val, n_test));

  std::set<DrugPair> used;
  detail::add_negatives(bundle.train, drug_count, ddis, used, neg_rng, {});
  detail::add_negatives(bundle.validation, drug_count, ddis, used, neg_rng, {});
  detail::add_negatives(bundle.test, drug_count, ddis, used, neg_rng, {});
  if (n_train == 0) bundle.warnings.emplace_back("train partition is empty");
  if (n_val == 0) bundle.warnings.emplace_back("validation partition is empty");
  if (n_test == 0) bundle.warnings.emplace_back("test partition is empty");
  return bundle;
}

/// Cold-start ("new drugs") split: ceil(fraction * n) drugs are held out and
/// every interaction touching one of them is test-only. The rest is split
/// 90/10 into train and validation. Test negatives touch a held-out drug;
/// train and validation negatives touch none.
inline SplitBundle split_cold_start(std::size_t drug_count, std::span<const DrugPair> ddis, double drug_fraction,
                                    std::uint64_t seed) {
  if (!(drug_fraction > 0.0 && drug_fraction < 1.0)) throw ParameterError("cold-start drug fraction must lie in (0, 1)");
  if (drug_count == 0) throw ParameterError("cold-start split needs at least one drug");
  Rng split_rng = make_rng(seed, Stream::Split);
  Rng neg_rng = make_rng(seed, Stream::Negatives);

  const auto n_held = std::min(
      drug_count, static_cast<std::size_t>(std::ceil(drug_fraction * static_cast<double>(drug_count) - 1e-9)));
  std::vector<std::size_t> drugs(drug_count);
  std::iota(drugs.begin(), drugs.end(), std::size_t{0});
  std::shuffle(drugs.begin(), drugs.end(), split_rng);
  std::vector<std::uint8_t> is_held(drug_count, 0);
  SplitBundle bundle;
  bundle.protocol = SplitProtocol::ColdStart;
  bundle.seed = seed;
  for (std::size_t k = 0; k < std::max<std::size_t>(n_held, 1); ++k) {
    is_held[drugs[k]] = 1;
    bundle.held_out.push_back(drugs[k]);
  }
  std::sort(bundle.held_out.begin(), bundle.held_out.end());
  auto touches = [&is_held](const DrugPair& p) { return is_held[p.first] || is_held[p.second]; };

  std::vector<DrugPair> seen, unseen;
  for (const auto& p : ddis) (touches(p) ? unseen : seen).push_back(p);
  if (seen.empty()) throw ContractError("cold-start split holds out every positive; nothing left to train on");
  std::shuffle(seen.begin(), seen.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(seen.size())));
  std::span<const DrugPair> seen_span(seen);
  bundle.train = detail::as_positive(seen_span.subspan(0, seen.size() - n_val));
  bundle.validation = detail::as_positive(seen_span.subspan(seen.size() - n_val));
  bundle.test = detail::as_positive(unseen);

  std::set<DrugPair> used;
  const PairFilter inside = [touches](const DrugPair& p) { return !touches(p); };
  const PairFilter outside = touches;
  detail::add_negatives(bundle.train, drug_count, ddis, used, neg_rng, inside);
  detail::add_negatives(bundle.validation, drug_count, ddis, used, neg_rng, inside);
  detail::add_negatives(bundle.test, drug_count, ddis, used, neg_rng, outside);
  if (n_val == 0) bundle.warnings.emplace_back("validation partition is empty");
  if (unseen.empty()) bundle.warnings.emplace_back("test partition is empty");
  return bundle;
}

}  // namespace handdi
