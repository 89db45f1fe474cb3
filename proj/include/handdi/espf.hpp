#pragma once

#include <cctype>
#include <optional>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/hin.hpp"
#include "handdi/io.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

using TokenSequence = std::vector<std::string>;

/// Splits SMILES into atom/bond level units: bracket atoms, Cl and Br, %nn
/// ring closures and otherwise single characters. Concatenating the tokens
/// reproduces the input.
inline TokenSequence tokenize_smiles(std::string_view s) {
  if (s.empty()) throw ParseError("empty SMILES string", 0);
  TokenSequence out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto ch = static_cast<unsigned char>(s[i]);
    if (ch < 0x21 || ch > 0x7e) {
      throw ParseError("SMILES: unexpected character at position " + std::to_string(i), i);
    }
    if (ch == '[') {
      const auto close = s.find(']', i + 1);
      const auto reopen = s.find('[', i + 1);
      if (close == std::string_view::npos || (reopen != std::string_view::npos && reopen < close)) {
        throw ParseError("SMILES: unbalanced '[' at position " + std::to_string(i), i);
      }
      out.emplace_back(s.substr(i, close - i + 1));
      i = close + 1;
    } else if (ch == ']') {
      throw ParseError("SMILES: unmatched ']' at position " + std::to_string(i), i);
    } else if ((ch == 'C' && i + 1 < s.size() && s[i + 1] == 'l') || (ch == 'B' && i + 1 < s.size() && s[i + 1] == 'r')) {
      out.emplace_back(s.substr(i, 2));
      i += 2;
    } else if (ch == '%' && i + 2 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])) &&
               std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
      out.emplace_back(s.substr(i, 3));
      i += 3;
    } else {
      out.emplace_back(1, s[i]);
      ++i;
    }
  }
  return out;
}

struct Merge {
  std::string left;
  std::string right;
  std::string unit() const { return left + right; }
  friend bool operator==(const Merge&, const Merge&) = default;
};

/// Substructure vocabulary: sorted base units followed by merged units in
/// merge order. Feature column k corresponds to units()[k].
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> base_units, std::size_t threshold, std::size_t max_size)
      : threshold_(threshold), max_size_(max_size) {
    std::sort(base_units.begin(), base_units.end());
    base_units.erase(std::unique(base_units.begin(), base_units.end()), base_units.end());
    for (auto& u : base_units) add_unit(std::move(u));
    base_count_ = units_.size();
  }

  const std::vector<std::string>& units() const noexcept { return units_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  std::size_t size() const noexcept { return units_.size(); }
  std::size_t base_count() const noexcept { return base_count_; }
  std::size_t threshold() const noexcept { return threshold_; }
  std::size_t max_size() const noexcept { return max_size_; }

  std::optional<std::size_t> index_of(const std::string& unit) const {
    if (auto it = index_.find(unit); it != index_.end()) return it->second;
    return std::nullopt;
  }

  void append_merge(Merge m) {
    add_unit(m.unit());
    merges_.push_back(std::move(m));
  }

  /// One unit per line in column order; merged units carry their two parts.
  std::string dump() const {
    std::ostringstream os;
    os << "# espf-vocabulary v1\n";
    os << "# threshold=" << threshold_ << " max_size=" << max_size_ << " base=" << base_count_ << '\n';
    for (std::size_t i = 0; i < base_count_; ++i) os << units_[i] << '\n';
    for (const auto& m : merges_) os << m.unit() << '\t' << m.left << '\t' << m.right << '\n';
    return os.str();
  }

  static Vocabulary parse(std::string_view text) {
    Vocabulary v;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    bool in_merges = false;
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      // "#" is itself a SMILES token; headers carry a space after the hash.
      if (line.size() > 1 && line[0] == '#' && line[1] == ' ') {
        std::istringstream meta(line.substr(1));
        std::string field;
        while (meta >> field) {
          const auto eq = field.find('=');
          if (eq == std::string::npos) continue;
          std::size_t value = 0;
          if (!io::parse_number(std::string_view(field).substr(eq + 1), value)) continue;
          const auto key = field.substr(0, eq);
          if (key == "threshold") v.threshold_ = value;
          if (key == "max_size") v.max_size_ = value;
        }
        continue;
      }
      const auto fields = io::split(line, '\t');
      if (fields.size() == 1) {
        if (in_merges) throw ParseError("vocabulary line " + std::to_string(number) + ": base unit after merges", number);
        v.add_unit(std::string(fields[0]));
        v.base_count_ = v.units_.size();
      } else if (fields.size() == 3 && std::string(fields[1]) + std::string(fields[2]) == fields[0]) {
        in_merges = true;
        v.append_merge(Merge{std::string(fields[1]), std::string(fields[2])});
      } else {
        throw ParseError("vocabulary line " + std::to_string(number) + ": expected 'unit' or 'unit<TAB>left<TAB>right'",
                         number);
      }
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.units_ == b.units_ && a.merges_ == b.merges_ && a.base_count_ == b.base_count_ &&
           a.threshold_ == b.threshold_ && a.max_size_ == b.max_size_;
  }

 private:
  void add_unit(std::string unit) {
    if (index_.contains(unit)) return;
    index_.emplace(unit, units_.size());
    units_.push_back(std::move(unit));
  }

  std::vector<std::string> units_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Merge> merges_;
  std::size_t base_count_ = 0;
  std::size_t threshold_ = 0;
  std::size_t max_size_ = 0;
};

/// Rewrites `tokens` replacing each non-overlapping left-to-right occurrence
/// of (left, right) with the merged unit. Returns the number of replacements.
inline std::size_t apply_merge(TokenSequence& tokens, const Merge& merge) {
  if (tokens.size() < 2) return 0;
  TokenSequence next;
  next.reserve(tokens.size());
  std::size_t merged = 0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (j + 1 < tokens.size() && tokens[j] == merge.left && tokens[j + 1] == merge.right) {
      next.push_back(merge.left + merge.right);
      ++merged;
      ++j;
    } else {
      next.push_back(std::move(tokens[j]));
    }
  }
  tokens = std::move(next);
  return merged;
}

/// Non-overlapping adjacent pair frequencies: within a run of identical
/// tokens "a a a" the pair (a, a) counts once, matching apply_merge.
inline std::map<std::pair<std::string, std::string>, std::size_t> pair_frequencies(
    const std::vector<TokenSequence>& corpus) {
  std::map<std::pair<std::string, std::string>, std::size_t> freq;
  for (const auto& seq : corpus) {
    bool prev_counted_same = false;
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
      const bool same = seq[j] == seq[j + 1];
      if (same && prev_counted_same) {
        prev_counted_same = false;
        continue;
      }
      ++freq[{seq[j], seq[j + 1]}];
      prev_counted_same = same;
    }
  }
  return freq;
}

/// Frequency-threshold pair merging over a tokenized corpus. Each round merges
/// the most frequent adjacent pair (ties: lexicographically smallest
/// concatenation, then smallest left part) while its frequency is at least
/// `threshold` and the vocabulary holds fewer than `max_size` units.
inline Vocabulary build_vocab(std::vector<TokenSequence> corpus, std::size_t threshold, std::size_t max_size) {
  if (threshold < 1) throw ParameterError("build_vocab: threshold must be at least 1");
  if (max_size < 1) throw ParameterError("build_vocab: max_size must be at least 1");
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");

  std::vector<std::string> base;
  for (const auto& seq : corpus) base.insert(base.end(), seq.begin(), seq.end());
  Vocabulary vocab(std::move(base), threshold, max_size);

  while (vocab.size() < max_size) {
    const auto freq = pair_frequencies(corpus);
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    std::string best_concat;
    for (const auto& [pair, count] : freq) {
      if (count < threshold) continue;
      std::string concat = pair.first + pair.second;
      if (!best || count > best_count ||
          (count == best_count && (concat < best_concat || (concat == best_concat && pair.first < best->first)))) {
        best = &pair;
        best_count = count;
        best_concat = std::move(concat);
      }
    }
    if (!best) break;
    Merge merge{best->first, best->second};
    for (auto& seq : corpus) apply_merge(seq, merge);
    vocab.append_merge(std::move(merge));
  }
  return vocab;
}

/// Per-drug boolean features over a fixed column axis (vocabulary units or
/// fingerprint bits); row i belongs to drug index i.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  bool get(std::size_t i, std::size_t j) const { return bits[i * cols + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { bits[i * cols + j] = v ? 1 : 0; }

  std::vector<std::uint8_t> row(std::size_t i) const {
    return {bits.begin() + static_cast<std::ptrdiff_t>(i * cols), bits.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols)};
  }

  template <std::floating_point T>
  Tensor<T> to_tensor() const {
    std::vector<T> data(bits.begin(), bits.end());
    return Tensor<T>({rows, cols}, std::move(data));
  }

  /// TSV `drug_id <TAB> bitstring`, rows in registry order.
  std::string to_tsv(const EntityRegistry& registry) const {
    std::ostringstream os;
    os << "# d0=" << cols << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
      os << registry.id(EntityKind::Drug, i) << '\t';
      for (std::size_t j = 0; j < cols; ++j) os << (get(i, j) ? '1' : '0');
      os << '\n';
    }
    return os.str();
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

/// Feature row of one drug: merges applied in vocabulary order, then one bit
/// per distinct final unit. Units absent from the vocabulary set no bit.
inline std::vector<std::uint8_t> encode_drug(TokenSequence tokens, const Vocabulary& vocab) {
  for (const auto& m : vocab.merges()) apply_merge(tokens, m);
  std::vector<std::uint8_t> row(vocab.size(), 0);
  for (const auto& t : tokens)
    if (auto idx = vocab.index_of(t)) row[*idx] = 1;
  return row;
}

struct SmilesRecord {
  std::size_t drug = 0;
  std::string smiles;
};

/// SMILES file: TSV `drug_id <TAB> smiles`. Later duplicates of a drug id
/// replace earlier ones.
inline std::vector<SmilesRecord> load_smiles(std::istream& in, EntityRegistry& registry,
                                             RegistryMode mode = RegistryMode::Discover) {
  std::vector<SmilesRecord> out;
  std::unordered_map<std::size_t, std::size_t> position;
  io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || io::trim(fields[0]).empty() || io::trim(fields[1]).empty()) {
      throw ParseError("line " + std::to_string(number) + ": expected 'drug_id<TAB>smiles'", number);
    }
    const std::size_t drug = registry.intern(EntityKind::Drug, io::trim(fields[0]), mode);
    SmilesRecord rec{drug, std::string(io::trim(fields[1]))};
    try {
      tokenize_smiles(rec.smiles);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(number) + ": drug '" + std::string(io::trim(fields[0])) + "': " + e.what(),
                       number);
    }
    if (auto it = position.find(drug); it != position.end()) {
      out[it->second] = std::move(rec);
    } else {
      position.emplace(drug, out.size());
      out.push_back(std::move(rec));
    }
  });
  return out;
}

inline std::vector<SmilesRecord> load_smiles(const std::filesystem::path& path, EntityRegistry& registry,
                                             RegistryMode mode = RegistryMode::Discover) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SMILES file '" + path.string() + "'");
  return load_smiles(in, registry, mode);
}

struct EspfFeatures {
  Vocabulary vocabulary;
  FeatureMatrix features;
};

/// Tokenizes every record, learns the vocabulary on the whole corpus and
/// encodes each drug. Drugs without SMILES keep an all-zero row.
inline EspfFeatures espf_features(const std::vector<SmilesRecord>& records, std::size_t drug_count,
                                  std::size_t threshold, std::size_t max_size) {
  std::vector<TokenSequence> corpus;
  corpus.reserve(records.size());
  for (const auto& rec : records) {
    try {
      corpus.push_back(tokenize_smiles(rec.smiles));
    } catch (const ParseError& e) {
      throw ParseError("drug index " + std::to_string(rec.drug) + ": " + e.what(), e.location());
    }
  }
  EspfFeatures out{build_vocab(corpus, threshold, max_size), {}};
  out.features = FeatureMatrix(drug_count, out.vocabulary.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto row = encode_drug(corpus[r], out.vocabulary);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (row[j]) out.features.set(records[r].drug, j);
  }
  return out;
}

inline constexpr std::size_t kFingerprintBits = 167;

inline std::string fingerprint_bit_id(std::size_t bit) { return "MACCS_" + std::to_string(bit); }

struct FingerprintData {
  RelationMatrix has{EntityKind::Drug, EntityKind::Substructure};
  FeatureMatrix features;  // sized at load time; rows follow the registry
};

/// Fingerprint file: TSV `drug_id <TAB> 167 characters of 0/1`. Registers one
/// Substructure entity per bit position and an H entry per set bit.
inline FingerprintData load_fingerprints(std::istream& in, EntityRegistry& registry,
                                         RegistryMode mode = RegistryMode::Discover) {
  for (std::size_t b = 0; b < kFingerprintBits; ++b) registry.intern(EntityKind::Substructure, fingerprint_bit_id(b));
  std::vector<std::pair<std::size_t, std::string>> rows;
  FingerprintData out;
  io::for_each_data_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || io::trim(fields[0]).empty()) {
      throw ParseError("line " + std::to_string(number) + ": expected 'drug_id<TAB>bitstring'", number);
    }
    const auto id = io::trim(fields[0]);
    const auto bitstring = io::trim(fields[1]);
    if (bitstring.size() != kFingerprintBits) {
      throw FormatError("fingerprint for drug '" + std::string(id) + "' has " + std::to_string(bitstring.size()) +
                        " bits, expected " + std::to_string(kFingerprintBits));
    }
    if (bitstring.find_first_not_of("01") != std::string_view::npos) {
      throw FormatError("fingerprint for drug '" + std::string(id) + "' contains characters other than 0/1");
    }
    const std::size_t drug = registry.intern(EntityKind::Drug, id, mode);
    rows.emplace_back(drug, std::string(bitstring));
  });
  out.features = FeatureMatrix(registry.count(EntityKind::Drug), kFingerprintBits);
  for (const auto& [drug, bitstring] : rows) {
    for (std::size_t b = 0; b < kFingerprintBits; ++b) {
      const bool on = bitstring[b] == '1';
      out.features.set(drug, b, on);
      if (on) out.has.insert(drug, *registry.find(EntityKind::Substructure, fingerprint_bit_id(b)));
    }
  }
  out.has.normalize();
  return out;
}

inline FingerprintData load_fingerprints(const std::filesystem::path& path, EntityRegistry& registry,
                                         RegistryMode mode = RegistryMode::Discover) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fingerprint file '" + path.string() + "'");
  return load_fingerprints(in, registry, mode);
}

/// Grows a feature matrix to `drug_count` rows (new rows are zero), for
/// drugs registered after the features were loaded.
inline FeatureMatrix pad_rows(FeatureMatrix m, std::size_t drug_count) {
  if (drug_count < m.rows) throw ContractError("pad_rows: cannot shrink feature matrix");
  m.bits.resize(drug_count * m.cols, 0);
  m.rows = drug_count;
  return m;
}

}  // namespace handdi
