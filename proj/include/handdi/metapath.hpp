#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/hin.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

struct MetaPathStep {
  Relation relation;
  bool transposed = false;

  EntityKind from() const { return transposed ? schema_of(relation).target : schema_of(relation).source; }
  EntityKind to() const { return transposed ? schema_of(relation).source : schema_of(relation).target; }
};

/// Drug-to-drug composite relation, one incidence matrix (or its transpose)
/// per step.
struct MetaPathSpec {
  std::string name;
  std::vector<MetaPathStep> steps;

  /// Throws SchemaError unless the steps chain Drug -> ... -> Drug.
  void validate() const {
    if (steps.empty()) throw SchemaError("meta-path '" + name + "' has no steps");
    if (steps.front().from() != EntityKind::Drug || steps.back().to() != EntityKind::Drug) {
      throw SchemaError("meta-path '" + name + "' must start and end at Drug");
    }
    for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
      if (steps[k].to() != steps[k + 1].from()) {
        throw SchemaError("meta-path '" + name + "' step " + std::to_string(k) + " ends at " +
                          kind_name(steps[k].to()) + " but step " + std::to_string(k + 1) + " starts at " +
                          kind_name(steps[k + 1].from()));
      }
    }
  }

  /// Reversal yields the same product (the symmetric PPI step is its own
  /// transpose).
  bool palindromic() const {
    const std::size_t n = steps.size();
    for (std::size_t k = 0; k < n; ++k) {
      const auto& a = steps[k];
      const auto& b = steps[n - 1 - k];
      if (a.relation != b.relation) return false;
      if (a.relation != Relation::Interacts && a.transposed == b.transposed) return false;
    }
    return true;
  }

  std::string signature() const {
    std::string out;
    for (const auto& s : steps) {
      if (!out.empty()) out += '.';
      out += schema_of(s.relation).symbol;
      if (s.transposed) out += "^T";
    }
    return out;
  }
};

/// DID-1 (shared targets), DID-2 (targets linked by PPI), DID-3 (shared
/// substructures), DID-4 (shared side effects).
inline std::vector<MetaPathSpec> builtin_specs() {
  std::vector<MetaPathSpec> specs = {
      {"DID-1", {{Relation::Targets, false}, {Relation::Targets, true}}},
      {"DID-2", {{Relation::Targets, false}, {Relation::Interacts, false}, {Relation::Targets, true}}},
      {"DID-3", {{Relation::Has, false}, {Relation::Has, true}}},
      {"DID-4", {{Relation::Causes, false}, {Relation::Causes, true}}},
  };
  for (const auto& s : specs) s.validate();
  return specs;
}

inline MetaPathSpec builtin_spec(std::string_view name) {
  for (auto& s : builtin_specs())
    if (s.name == name) return s;
  throw ParameterError("unknown meta-path '" + std::string(name) + "' (expected DID-1..DID-4)");
}

struct CountEntry {
  std::uint32_t row;
  std::uint32_t col;
  std::uint64_t count;
  friend bool operator==(const CountEntry&, const CountEntry&) = default;
};

/// Path-instance counts between drugs for one meta-path, sparse, sorted by
/// (row, col), zeros omitted.
struct CommutingMatrix {
  std::string name;
  std::size_t size = 0;  // drug count
  std::vector<CountEntry> entries;

  std::uint64_t at(std::size_t i, std::size_t j) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{i, j}, [](const CountEntry& e, const auto& key) {
      return std::pair<std::size_t, std::size_t>{e.row, e.col} < key;
    });
    return (it != entries.end() && it->row == i && it->col == j) ? it->count : 0;
  }

  bool symmetric() const {
    for (const auto& e : entries)
      if (at(e.col, e.row) != e.count) return false;
    return true;
  }

  /// TSV rows `drug_id <TAB> drug_id <TAB> count`.
  std::string to_tsv(const EntityRegistry& registry) const {
    std::ostringstream os;
    for (const auto& e : entries)
      os << registry.id(EntityKind::Drug, e.row) << '\t' << registry.id(EntityKind::Drug, e.col) << '\t' << e.count
         << '\n';
    return os.str();
  }
};

namespace detail {

/// Adjacency lists of one oriented step, indexed by the step's source kind.
inline std::vector<std::vector<std::uint32_t>> oriented_adjacency(const Hin& hin, const MetaPathStep& step) {
  const auto& m = hin.matrix(step.relation);
  std::vector<std::vector<std::uint32_t>> adj(hin.registry.count(step.from()));
  for (const auto& [r, c] : m.coords) {
    const auto src = step.transposed ? c : r;
    const auto dst = step.transposed ? r : c;
    if (src >= adj.size()) throw SchemaError("relation entry out of registry bounds");
    adj[src].push_back(dst);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

}  // namespace detail

/// Left-to-right sparse integer product of the step matrices.
inline CommutingMatrix commuting_matrix(const Hin& hin, const MetaPathSpec& spec) {
  spec.validate();
  for (const auto& step : spec.steps) {
    const auto& m = hin.matrix(step.relation);
    const auto schema = schema_of(step.relation);
    if (m.source != schema.source || m.target != schema.target) {
      throw SchemaError("meta-path '" + spec.name + "': relation " + schema.symbol + " has mismatched entity kinds");
    }
  }
  const std::size_t n = hin.drug_count();
  // Current product as sparse rows over the current entity kind.
  using SparseRow = std::vector<std::pair<std::uint32_t, std::uint64_t>>;
  std::vector<SparseRow> product(n);
  for (std::size_t i = 0; i < n; ++i) product[i].emplace_back(static_cast<std::uint32_t>(i), 1);

  for (const auto& step : spec.steps) {
    const auto adj = detail::oriented_adjacency(hin, step);
    const std::size_t width = hin.registry.count(step.to());
    std::vector<std::uint64_t> accumulator(width, 0);
    std::vector<std::uint32_t> touched;
    for (auto& row : product) {
      touched.clear();
      for (const auto& [k, count] : row) {
        for (auto dst : adj[k]) {
          if (accumulator[dst] == 0) touched.push_back(dst);
          accumulator[dst] += count;
        }
      }
      std::sort(touched.begin(), touched.end());
      SparseRow next;
      next.reserve(touched.size());
      for (auto c : touched) {
        next.emplace_back(c, accumulator[c]);
        accumulator[c] = 0;
      }
      row = std::move(next);
    }
  }

  CommutingMatrix out{spec.name, n, {}};
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [j, count] : product[i]) out.entries.push_back({static_cast<std::uint32_t>(i), j, count});
  return out;
}

inline constexpr std::size_t kBruteForceLimit = 50;

/// Counts concrete paths from drug i to drug j by depth-first enumeration
/// over the raw coordinate lists. Test oracle for commuting_matrix; refuses
/// instances with more than 50 entities of any kind.
inline std::uint64_t brute_force_path_count(const Hin& hin, const MetaPathSpec& spec, std::size_t i, std::size_t j) {
  spec.validate();
  for (auto k : kAllEntityKinds) {
    if (hin.registry.count(k) > kBruteForceLimit) {
      throw ContractError(std::string("brute_force_path_count: ") + kind_name(k) + " count " +
                          std::to_string(hin.registry.count(k)) + " exceeds " + std::to_string(kBruteForceLimit));
    }
  }
  std::uint64_t total = 0;
  auto walk = [&](auto&& self, std::size_t depth, std::size_t node) -> void {
    if (depth == spec.steps.size()) {
      if (node == j) ++total;
      return;
    }
    const auto& step = spec.steps[depth];
    for (const auto& [r, c] : hin.matrix(step.relation).coords) {
      const std::size_t from = step.transposed ? c : r;
      const std::size_t to = step.transposed ? r : c;
      if (from == node) self(self, depth + 1, to);
    }
  };
  walk(walk, 0, i);
  return total;
}

/// Binarized meta-path neighborhood with self-loops on every drug.
struct NeighborGraph {
  std::string name;
  Mask adjacency;

  std::size_t size() const noexcept { return adjacency.rows(); }
};

inline NeighborGraph neighbor_graph(const CommutingMatrix& m, std::uint64_t threshold = 1) {
  if (threshold < 1) throw ParameterError("neighbor_graph: threshold must be at least 1");
  NeighborGraph g{m.name, Mask(m.size, m.size)};
  for (std::size_t i = 0; i < m.size; ++i) g.adjacency.set(i, i);
  for (const auto& e : m.entries)
    if (e.row != e.col && e.count >= threshold) g.adjacency.set(e.row, e.col);
  return g;
}

inline std::vector<NeighborGraph> neighbor_graphs(const Hin& hin, const std::vector<MetaPathSpec>& specs,
                                                  std::uint64_t threshold = 1) {
  std::vector<NeighborGraph> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) out.push_back(neighbor_graph(commuting_matrix(hin, spec), threshold));
  return out;
}

}  // namespace handdi
