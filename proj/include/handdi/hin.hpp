#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/io.hpp"

namespace handdi {

enum class EntityKind : std::uint8_t { Drug = 0, Protein = 1, SideEffect = 2, Substructure = 3 };

inline constexpr std::array<EntityKind, 4> kAllEntityKinds = {EntityKind::Drug, EntityKind::Protein,
                                                              EntityKind::SideEffect, EntityKind::Substructure};

inline const char* kind_name(EntityKind kind) {
  switch (kind) {
    case EntityKind::Drug: return "Drug";
    case EntityKind::Protein: return "Protein";
    case EntityKind::SideEffect: return "SideEffect";
    case EntityKind::Substructure: return "Substructure";
  }
  return "?";
}

inline std::optional<EntityKind> parse_kind(std::string_view name) {
  for (auto k : kAllEntityKinds)
    if (name == kind_name(k)) return k;
  return std::nullopt;
}

/// Whether loaders may create entities they have not seen before.
enum class RegistryMode { Discover, Strict };

/// Per-kind dense indexing of external string identifiers.
class EntityRegistry {
 public:
  std::size_t count(EntityKind kind) const { return ids_[slot(kind)].size(); }

  /// Index of `id`, creating it in Discover mode. Throws SchemaError for an
  /// unknown id in Strict mode.
  std::size_t intern(EntityKind kind, std::string_view id, RegistryMode mode = RegistryMode::Discover) {
    auto& map = index_[slot(kind)];
    if (auto it = map.find(std::string(id)); it != map.end()) return it->second;
    if (mode == RegistryMode::Strict) {
      throw SchemaError(std::string("unknown ") + kind_name(kind) + " id '" + std::string(id) + "'");
    }
    const std::size_t idx = ids_[slot(kind)].size();
    ids_[slot(kind)].emplace_back(id);
    map.emplace(std::string(id), idx);
    return idx;
  }

  std::optional<std::size_t> find(EntityKind kind, std::string_view id) const {
    const auto& map = index_[slot(kind)];
    if (auto it = map.find(std::string(id)); it != map.end()) return it->second;
    return std::nullopt;
  }

  const std::string& id(EntityKind kind, std::size_t index) const { return ids_[slot(kind)].at(index); }
  const std::vector<std::string>& ids(EntityKind kind) const { return ids_[slot(kind)]; }

  /// TSV `kind <TAB> index <TAB> id`, kinds in enum order.
  std::string dump() const {
    std::ostringstream os;
    for (auto k : kAllEntityKinds) {
      const auto& list = ids_[slot(k)];
      for (std::size_t i = 0; i < list.size(); ++i) os << kind_name(k) << '\t' << i << '\t' << list[i] << '\n';
    }
    return os.str();
  }

 private:
  static std::size_t slot(EntityKind kind) { return static_cast<std::size_t>(kind); }

  std::array<std::vector<std::string>, 4> ids_;
  std::array<std::unordered_map<std::string, std::size_t>, 4> index_;
};

/// The four typed incidence matrices of the drug HIN.
enum class Relation : std::uint8_t {
  Targets = 0,       // T: drug x protein
  Causes = 1,        // C: drug x side effect
  Has = 2,           // H: drug x substructure
  Interacts = 3,     // P: protein x protein, symmetric
};

struct RelationSchema {
  const char* symbol;
  EntityKind source;
  EntityKind target;
};

inline RelationSchema schema_of(Relation r) {
  switch (r) {
    case Relation::Targets: return {"T", EntityKind::Drug, EntityKind::Protein};
    case Relation::Causes: return {"C", EntityKind::Drug, EntityKind::SideEffect};
    case Relation::Has: return {"H", EntityKind::Drug, EntityKind::Substructure};
    case Relation::Interacts: return {"P", EntityKind::Protein, EntityKind::Protein};
  }
  return {"?", EntityKind::Drug, EntityKind::Drug};
}

using Coord = std::pair<std::uint32_t, std::uint32_t>;

/// Sparse boolean matrix between two entity kinds as sorted unique (row, col)
/// pairs.
struct RelationMatrix {
  EntityKind source = EntityKind::Drug;
  EntityKind target = EntityKind::Drug;
  std::vector<Coord> coords;

  RelationMatrix() = default;
  RelationMatrix(EntityKind s, EntityKind t) : source(s), target(t) {}

  std::size_t nnz() const noexcept { return coords.size(); }

  bool contains(std::size_t r, std::size_t c) const {
    return std::binary_search(coords.begin(), coords.end(),
                              Coord{static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
  }

  void insert(std::size_t r, std::size_t c) {
    coords.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
  }

  void normalize() {
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  }

  /// Adds the mirror of every entry; used for the undirected PPI relation.
  void symmetrize() {
    const std::size_t n = coords.size();
    for (std::size_t i = 0; i < n; ++i) coords.emplace_back(coords[i].second, coords[i].first);
    normalize();
  }

  friend bool operator==(const RelationMatrix&, const RelationMatrix&) = default;
};

using DrugPair = std::pair<std::size_t, std::size_t>;

inline DrugPair canonical_pair(std::size_t a, std::size_t b) { return a < b ? DrugPair{a, b} : DrugPair{b, a}; }

/// Heterogeneous information network: registry, the four relation matrices
/// and the (unordered, deduplicated) labelled drug-drug interactions.
struct Hin {
  EntityRegistry registry;
  RelationMatrix targets{EntityKind::Drug, EntityKind::Protein};
  RelationMatrix causes{EntityKind::Drug, EntityKind::SideEffect};
  RelationMatrix has{EntityKind::Drug, EntityKind::Substructure};
  RelationMatrix interacts{EntityKind::Protein, EntityKind::Protein};
  std::vector<DrugPair> ddis;

  std::size_t drug_count() const { return registry.count(EntityKind::Drug); }

  const RelationMatrix& matrix(Relation r) const {
    switch (r) {
      case Relation::Targets: return targets;
      case Relation::Causes: return causes;
      case Relation::Has: return has;
      case Relation::Interacts: return interacts;
    }
    return targets;
  }
  RelationMatrix& matrix(Relation r) { return const_cast<RelationMatrix&>(std::as_const(*this).matrix(r)); }
};

/// Parses two-column TSV relation text. Protein-protein input is symmetrized
/// and self-interactions are dropped.
inline RelationMatrix load_relation(std::istream& in, EntityKind source, EntityKind target, EntityRegistry& registry,
                                    RegistryMode mode = RegistryMode::Discover) {
  RelationMatrix m(source, target);
  io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || io::trim(fields[0]).empty() || io::trim(fields[1]).empty()) {
      throw ParseError("line " + std::to_string(number) + ": expected two tab-separated identifiers", number);
    }
    std::size_t r = 0, c = 0;
    try {
      r = registry.intern(source, io::trim(fields[0]), mode);
      c = registry.intern(target, io::trim(fields[1]), mode);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
    if (source == EntityKind::Protein && target == EntityKind::Protein && r == c) return;
    m.insert(r, c);
  });
  if (source == EntityKind::Protein && target == EntityKind::Protein) {
    m.symmetrize();
  } else {
    m.normalize();
  }
  return m;
}

inline RelationMatrix load_relation(const std::filesystem::path& path, EntityKind source, EntityKind target,
                                    EntityRegistry& registry, RegistryMode mode = RegistryMode::Discover) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open relation file '" + path.string() + "'");
  try {
    return load_relation(in, source, target, registry, mode);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.location());
  }
}

/// Relation as TSV of external ids, one line per stored coordinate.
inline std::string serialize_relation(const RelationMatrix& m, const EntityRegistry& registry) {
  std::ostringstream os;
  for (const auto& [r, c] : m.coords) {
    os << registry.id(m.source, r) << '\t' << registry.id(m.target, c) << '\n';
  }
  return os.str();
}

/// DDI label file: TSV `drug_id <TAB> drug_id`. Pairs are canonicalized to
/// (min, max) and deduplicated; self pairs are rejected.
inline std::vector<DrugPair> load_ddis(std::istream& in, EntityRegistry& registry,
                                       RegistryMode mode = RegistryMode::Discover) {
  std::vector<DrugPair> pairs;
  io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || io::trim(fields[0]).empty() || io::trim(fields[1]).empty()) {
      throw ParseError("line " + std::to_string(number) + ": expected two tab-separated drug ids", number);
    }
    std::size_t a = 0, b = 0;
    try {
      a = registry.intern(EntityKind::Drug, io::trim(fields[0]), mode);
      b = registry.intern(EntityKind::Drug, io::trim(fields[1]), mode);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
    if (a == b) throw SchemaError("line " + std::to_string(number) + ": self interaction '" + std::string(fields[0]) + "'");
    pairs.push_back(canonical_pair(a, b));
  });
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

inline std::vector<DrugPair> load_ddis(const std::filesystem::path& path, EntityRegistry& registry,
                                       RegistryMode mode = RegistryMode::Discover) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open DDI file '" + path.string() + "'");
  try {
    return load_ddis(in, registry, mode);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.location());
  }
}

inline std::string serialize_ddis(const std::vector<DrugPair>& ddis, const EntityRegistry& registry) {
  std::ostringstream os;
  for (const auto& [a, b] : ddis)
    os << registry.id(EntityKind::Drug, a) << '\t' << registry.id(EntityKind::Drug, b) << '\n';
  return os.str();
}

struct Finding {
  enum class Severity { Warning, Error };
  Severity severity;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool passed() const {
    return std::none_of(findings.begin(), findings.end(),
                        [](const Finding& f) { return f.severity == Finding::Severity::Error; });
  }

  std::string to_text() const {
    std::ostringstream os;
    os << (passed() ? "PASS" : "FAIL") << '\n';
    for (const auto& f : findings)
      os << (f.severity == Finding::Severity::Error ? "error\t" : "warning\t") << f.message << '\n';
    return os.str();
  }
};

/// Diagnostics over a HIN: schema, bounds, duplicates, PPI symmetry and
/// diagonal, invalid DDI pairs (errors) and orphan entities (warnings).
inline ValidationReport validate(const Hin& hin) {
  ValidationReport report;
  auto error = [&](std::string msg) { report.findings.push_back({Finding::Severity::Error, std::move(msg)}); };
  const auto& reg = hin.registry;
  std::array<std::vector<std::size_t>, 4> degree;
  for (auto k : kAllEntityKinds) degree[static_cast<std::size_t>(k)].assign(reg.count(k), 0);

  for (auto rel : {Relation::Targets, Relation::Causes, Relation::Has, Relation::Interacts}) {
    const auto schema = schema_of(rel);
    const auto& m = hin.matrix(rel);
    if (m.source != schema.source || m.target != schema.target) {
      error(std::string("relation ") + schema.symbol + " has kinds " + kind_name(m.source) + "x" + kind_name(m.target));
      continue;
    }
    const std::size_t rows = reg.count(m.source);
    const std::size_t cols = reg.count(m.target);
    for (std::size_t i = 0; i < m.coords.size(); ++i) {
      const auto [r, c] = m.coords[i];
      if (r >= rows || c >= cols) {
        error(std::string("relation ") + schema.symbol + " entry (" + std::to_string(r) + "," + std::to_string(c) +
              ") out of bounds " + std::to_string(rows) + "x" + std::to_string(cols));
        continue;
      }
      if (i > 0 && m.coords[i - 1] >= m.coords[i]) {
        error(std::string("relation ") + schema.symbol + " has unsorted or duplicate entry (" + std::to_string(r) +
              "," + std::to_string(c) + ")");
      }
      ++degree[static_cast<std::size_t>(m.source)][r];
      ++degree[static_cast<std::size_t>(m.target)][c];
      if (rel == Relation::Interacts) {
        if (r == c) error("P has diagonal entry for protein '" + reg.id(EntityKind::Protein, r) + "'");
        else if (!m.contains(c, r)) {
          error("P asymmetric: (" + reg.id(EntityKind::Protein, r) + ", " + reg.id(EntityKind::Protein, c) +
                ") present without its mirror");
        }
      }
    }
  }
  const std::size_t n = reg.count(EntityKind::Drug);
  for (std::size_t i = 0; i < hin.ddis.size(); ++i) {
    const auto [a, b] = hin.ddis[i];
    if (a >= n || b >= n || a >= b) {
      error("DDI pair (" + std::to_string(a) + "," + std::to_string(b) + ") is not a canonical valid drug pair");
    } else if (i > 0 && hin.ddis[i - 1] >= hin.ddis[i]) {
      error("DDI list has unsorted or duplicate pair (" + reg.id(EntityKind::Drug, a) + ", " +
            reg.id(EntityKind::Drug, b) + ")");
    }
  }
  for (auto k : kAllEntityKinds) {
    const auto& deg = degree[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < deg.size(); ++i) {
      if (deg[i] == 0) {
        report.findings.push_back(
            {Finding::Severity::Warning, std::string("orphan ") + kind_name(k) + " '" + reg.id(k, i) + "'"});
      }
    }
  }
  return report;
}

/// Node and edge counts in the dataset-statistics layout.
struct HinStats {
  std::size_t drugs = 0;
  std::size_t proteins = 0;
  std::size_t side_effects = 0;
  std::size_t substructures = 0;
  std::size_t ddi = 0;
  std::size_t dpi = 0;
  std::size_t drug_side_effect = 0;
  std::size_t drug_substructure = 0;
  std::size_t ppi = 0;  // unordered protein pairs

  std::vector<std::pair<std::string, std::size_t>> rows() const {
    return {{"Drug", drugs},
            {"Protein", proteins},
            {"SideEffect", side_effects},
            {"Substructure", substructures},
            {"DDI", ddi},
            {"DPI", dpi},
            {"DrugSideEffect", drug_side_effect},
            {"DrugSubstructure", drug_substructure},
            {"PPI", ppi}};
  }

  std::string to_tsv() const {
    std::ostringstream os;
    for (const auto& [name, value] : rows()) os << name << '\t' << value << '\n';
    return os.str();
  }

  friend bool operator==(const HinStats&, const HinStats&) = default;
};

inline HinStats stats(const Hin& hin) {
  HinStats s;
  s.drugs = hin.registry.count(EntityKind::Drug);
  s.proteins = hin.registry.count(EntityKind::Protein);
  s.side_effects = hin.registry.count(EntityKind::SideEffect);
  s.substructures = hin.registry.count(EntityKind::Substructure);
  s.ddi = hin.ddis.size();
  s.dpi = hin.targets.nnz();
  s.drug_side_effect = hin.causes.nnz();
  s.drug_substructure = hin.has.nnz();
  const auto& p = hin.interacts;
  s.ppi = static_cast<std::size_t>(std::count_if(p.coords.begin(), p.coords.end(), [&p](const Coord& c) {
    return c.first < c.second || (c.first > c.second && !p.contains(c.second, c.first));
  }));
  return s;
}

}  // namespace handdi
