#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "handdi/errors.hpp"
#include "handdi/espf.hpp"
#include "handdi/metapath.hpp"
#include "handdi/random.hpp"
#include "handdi/synthetic.hpp"

using namespace handdi;

namespace {

std::string join(const TokenSequence& t) { return std::accumulate(t.begin(), t.end(), std::string()); }

std::size_t total_tokens(const std::vector<TokenSequence>& corpus) {
  std::size_t n = 0;
  for (const auto& s : corpus) n += s.size();
  return n;
}

std::vector<TokenSequence> random_corpus(std::uint64_t seed, std::size_t drugs) {
  Rng rng = make_rng(seed, Stream::Synthetic);
  std::vector<TokenSequence> corpus;
  for (std::size_t d = 0; d < drugs; ++d) corpus.push_back(tokenize_smiles(detail::random_smiles(rng, 5, 30)));
  return corpus;
}

}  // namespace

TEST(Tokenize, SingleCharacterAtoms) { EXPECT_EQ(tokenize_smiles("CCO"), (TokenSequence{"C", "C", "O"})); }

TEST(Tokenize, TwoLetterElements) {
  EXPECT_EQ(tokenize_smiles("C(Br)=O"), (TokenSequence{"C", "(", "Br", ")", "=", "O"}));
  EXPECT_EQ(tokenize_smiles("ClCCl"), (TokenSequence{"Cl", "C", "Cl"}));
}

TEST(Tokenize, BracketAtomsAndRingClosures) {
  EXPECT_EQ(tokenize_smiles("[nH]1cc1"), (TokenSequence{"[nH]", "1", "c", "c", "1"}));
  EXPECT_EQ(tokenize_smiles("C%12CC%12"), (TokenSequence{"C", "%12", "C", "C", "%12"}));
}

TEST(Tokenize, UnbalancedBracketReportsPosition) {
  try {
    tokenize_smiles("CC[NH");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 2u);
  }
  EXPECT_THROW(tokenize_smiles("C]"), ParseError);
  EXPECT_THROW(tokenize_smiles(""), ParseError);
  EXPECT_THROW(tokenize_smiles("C\xc3\xa9"), ParseError);
}

TEST(Tokenize, RoundTripOnRandomStrings) {
  Rng rng = make_rng(2, Stream::Synthetic);
  for (int i = 0; i < 200; ++i) {
    const auto s = detail::random_smiles(rng, 1, 40);
    EXPECT_EQ(join(tokenize_smiles(s)), s);
  }
}

TEST(BuildVocab, HandTracedTwoDrugCorpus) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CCO"), tokenize_smiles("CCN")};
  const auto v = build_vocab(corpus, 2, 512);
  // Pair counts: (C,C)=2, (C,O)=1, (C,N)=1. After merging CC: (CC,O)=1, (CC,N)=1.
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (Merge{"C", "C"}));
  EXPECT_EQ(v.units(), (std::vector<std::string>{"C", "N", "O", "CC"}));
  EXPECT_EQ(v.base_count(), 3u);
}

TEST(BuildVocab, HighThresholdKeepsBaseUnits) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CCO"), tokenize_smiles("CCN")};
  const auto v = build_vocab(corpus, 3, 512);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.size(), 3u);
}

TEST(BuildVocab, SizeCapAtBaseUnits) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CCO"), tokenize_smiles("CCN")};
  const auto v = build_vocab(corpus, 1, 3);
  EXPECT_TRUE(v.merges().empty());
  const auto w = build_vocab(corpus, 1, 5);
  EXPECT_EQ(w.size(), 5u);
}

TEST(BuildVocab, TiesBrokenByConcatenation) {
  // (C,O) and (C,N) both occur twice; "CN" < "CO".
  const std::vector<TokenSequence> corpus{tokenize_smiles("CO"), tokenize_smiles("CO"), tokenize_smiles("CN"),
                                          tokenize_smiles("CN")};
  const auto v = build_vocab(corpus, 2, 512);
  ASSERT_GE(v.merges().size(), 2u);
  EXPECT_EQ(v.merges()[0].unit(), "CN");
  EXPECT_EQ(v.merges()[1].unit(), "CO");
}

TEST(BuildVocab, RunsOfIdenticalTokensCountedWithoutOverlap) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CCC")};
  EXPECT_EQ((pair_frequencies(corpus).at({"C", "C"})), 1u);
  const std::vector<TokenSequence> four{tokenize_smiles("CCCC")};
  EXPECT_EQ((pair_frequencies(four).at({"C", "C"})), 2u);
  EXPECT_TRUE(build_vocab(corpus, 2, 512).merges().empty());
}

TEST(BuildVocab, RejectsBadParameters) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CC")};
  EXPECT_THROW(build_vocab(corpus, 0, 10), ParameterError);
  EXPECT_THROW(build_vocab({}, 1, 10), ContractError);
}

TEST(BuildVocab, EachMergeRemovesItsFrequencyInTokens) {
  auto corpus = random_corpus(9, 40);
  const auto v = build_vocab(corpus, 3, 200);
  ASSERT_FALSE(v.merges().empty());
  for (const auto& m : v.merges()) {
    const auto before = total_tokens(corpus);
    const auto freq = pair_frequencies(corpus);
    const auto expected = freq.at({m.left, m.right});
    for (auto& s : corpus) apply_merge(s, m);
    EXPECT_EQ(before - total_tokens(corpus), expected);
  }
}

TEST(BuildVocab, DeterministicAndDumpRoundTrips) {
  const auto corpus = random_corpus(4, 60);
  const auto a = build_vocab(corpus, 4, 128);
  const auto b = build_vocab(corpus, 4, 128);
  EXPECT_EQ(a.dump(), b.dump());
  const auto parsed = Vocabulary::parse(a.dump());
  EXPECT_EQ(parsed, a);
  EXPECT_EQ(parsed.dump(), a.dump());
  EXPECT_THROW(Vocabulary::parse("C\nCC\tC\tO\n"), ParseError);
  EXPECT_EQ(Vocabulary::parse("#\nC\n#C\t#\tC\n").units(), (std::vector<std::string>{"#", "C", "#C"}));
}

TEST(Encode, AppliesMergesInOrder) {
  const std::vector<TokenSequence> corpus{tokenize_smiles("CCO"), tokenize_smiles("CCN")};
  const auto v = build_vocab(corpus, 2, 512);
  const auto row = encode_drug(tokenize_smiles("CCO"), v);
  std::vector<std::string> on;
  for (std::size_t k = 0; k < row.size(); ++k)
    if (row[k]) on.push_back(v.units()[k]);
  EXPECT_EQ(on, (std::vector<std::string>{"O", "CC"}));
  EXPECT_EQ(encode_drug(tokenize_smiles("CCO"), v), row);
}

TEST(Encode, NoMergesGivesRawTokenSet) {
  const Vocabulary v({"C", "N", "O"}, 1, 3);
  EXPECT_EQ(encode_drug(tokenize_smiles("NCC"), v), (std::vector<std::uint8_t>{1, 1, 0}));
  // Tokens outside the vocabulary set no bit.
  EXPECT_EQ(encode_drug(tokenize_smiles("S"), v), (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Encode, IndependentOfCorpusOrder) {
  auto corpus = random_corpus(5, 30);
  const auto v = build_vocab(corpus, 3, 100);
  std::reverse(corpus.begin(), corpus.end());
  const auto w = build_vocab(corpus, 3, 100);
  EXPECT_EQ(v.dump(), w.dump());
  for (const auto& s : corpus) EXPECT_EQ(encode_drug(s, v), encode_drug(s, w));
}

TEST(EspfFeatures, RowsFollowDrugIndices) {
  EntityRegistry reg;
  std::istringstream in("d1\tCCO\nd2\tCCN\n");
  const auto records = load_smiles(in, reg);
  const auto f = espf_features(records, 3, 2, 512);
  EXPECT_EQ(f.features.rows, 3u);
  EXPECT_EQ(f.features.cols, 4u);
  EXPECT_TRUE(f.features.get(0, 3));
  EXPECT_TRUE(f.features.get(1, 1));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_FALSE(f.features.get(2, j));
  EXPECT_EQ(f.features.to_tsv([&] {
    reg.intern(EntityKind::Drug, "d3");
    return reg;
  }()),
            "# d0=4\nd1\t0011\nd2\t0101\nd3\t0000\n");
}

TEST(Fingerprints, BitsBecomeSubstructureEntities) {
  std::string three(kFingerprintBits, '0');
  three[0] = three[42] = three[166] = '1';
  std::string other(kFingerprintBits, '0');
  other[42] = '1';
  const std::string zero(kFingerprintBits, '0');
  Hin hin;
  std::istringstream in("a\t" + three + "\nb\t" + other + "\nz\t" + zero + "\n");
  auto fp = load_fingerprints(in, hin.registry);
  hin.has = fp.has;
  EXPECT_EQ(hin.registry.count(EntityKind::Substructure), kFingerprintBits);
  EXPECT_EQ(hin.registry.id(EntityKind::Substructure, 42), "MACCS_42");
  EXPECT_EQ(fp.has.nnz(), 4u);
  EXPECT_EQ(fp.features.rows, 3u);
  EXPECT_TRUE(fp.features.get(0, 166));
  const auto m = commuting_matrix(hin, builtin_spec("DID-3"));
  EXPECT_GE(m.at(0, 1), 1u);
  const auto report = validate(hin);
  EXPECT_TRUE(report.passed());
  EXPECT_NE(report.to_text().find("orphan Drug 'z'"), std::string::npos);
}

TEST(Fingerprints, WrongLengthNamesDrug) {
  EntityRegistry reg;
  std::istringstream in("DB00001\t0101\n");
  try {
    load_fingerprints(in, reg);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("DB00001"), std::string::npos);
  }
}
