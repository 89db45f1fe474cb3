#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "handdi/dataset.hpp"
#include "handdi/errors.hpp"

using namespace handdi;

namespace {

std::vector<DrugPair> random_ddis(std::size_t drugs, double density, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::Synthetic);
  std::vector<DrugPair> out;
  for (std::size_t a = 0; a < drugs; ++a)
    for (std::size_t b = a + 1; b < drugs; ++b)
      if (uniform01(rng) < density) out.emplace_back(a, b);
  return out;
}

std::set<DrugPair> as_set(const std::vector<LabeledPair>& v) {
  std::set<DrugPair> s;
  for (const auto& p : v) s.insert(p.pair());
  return s;
}

void expect_well_formed(const SplitBundle& b, const std::vector<DrugPair>& ddis) {
  const std::set<DrugPair> positives(ddis.begin(), ddis.end());
  std::set<DrugPair> seen;
  std::size_t total = 0;
  for (const auto* part : {&b.train, &b.validation, &b.test}) {
    std::size_t pos = 0, neg = 0;
    for (const auto& p : *part) {
      EXPECT_LT(p.i, p.j);
      EXPECT_TRUE(seen.insert(p.pair()).second) << "pair in two partitions";
      EXPECT_EQ(positives.contains(p.pair()), p.label == 1);
      (p.label ? pos : neg) += 1;
    }
    EXPECT_EQ(pos, neg);
    total += pos;
  }
  EXPECT_EQ(total, ddis.size());
}

}  // namespace

TEST(Negatives, ForcedByExclusion) {
  Rng rng = make_rng(1, Stream::Negatives);
  const std::vector<DrugPair> pos{{0, 1}};
  const auto neg = sample_negatives(3, pos, 2, rng);
  ASSERT_EQ(neg.size(), 2u);
  EXPECT_EQ(neg[0], (LabeledPair{0, 2, 0}));
  EXPECT_EQ(neg[1], (LabeledPair{1, 2, 0}));
  EXPECT_TRUE(sample_negatives(3, pos, 0, rng).empty());
  EXPECT_THROW(sample_negatives(3, pos, 3, rng), ContractError);
}

TEST(Negatives, NeverCollideWithPositives) {
  const auto ddis = random_ddis(100, 0.3, 5);
  const std::set<DrugPair> positives(ddis.begin(), ddis.end());
  Rng rng = make_rng(5, Stream::Negatives);
  std::size_t drawn = 0, collisions = 0;
  for (int round = 0; round < 5; ++round) {
    const auto neg = sample_negatives(100, ddis, 2000, rng);
    EXPECT_EQ(as_set(neg).size(), 2000u);
    for (const auto& p : neg) collisions += positives.contains(p.pair());
    drawn += neg.size();
  }
  EXPECT_EQ(drawn, 10000u);
  EXPECT_EQ(collisions, 0u);
}

TEST(SplitEdges, TenPositivesEightOneOne) {
  const std::vector<DrugPair> ddis{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}, {4, 5}, {4, 6}, {5, 6}, {6, 7}};
  const auto b = split_edges(12, ddis, {}, 3);
  auto count = [](const std::vector<LabeledPair>& v) { return std::count_if(v.begin(), v.end(), [](auto& p) { return p.label == 1; }); };
  EXPECT_EQ(count(b.train), 8);
  EXPECT_EQ(count(b.validation), 1);
  EXPECT_EQ(count(b.test), 1);
  expect_well_formed(b, ddis);
}

TEST(SplitEdges, DeterministicPerSeed) {
  const auto ddis = random_ddis(40, 0.1, 2);
  const auto a = split_edges(40, ddis, {}, 11), b = split_edges(40, ddis, {}, 11), c = split_edges(40, ddis, {}, 12);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(SplitEdges, PartitionLawOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ddis = random_ddis(30, 0.15, seed);
    expect_well_formed(split_edges(30, ddis, {0.7, 0.15, 0.15}, seed), ddis);
  }
}

TEST(SplitEdges, BadRatiosAndEmptyPartitions) {
  const std::vector<DrugPair> ddis{{0, 1}, {1, 2}};
  EXPECT_THROW(split_edges(5, ddis, {0.5, 0.1, 0.1}, 0), ParameterError);
  const auto b = split_edges(5, ddis, {}, 0);
  EXPECT_FALSE(b.warnings.empty());
}

TEST(ColdStart, TwoOfTenDrugsHeldOut) {
  const auto ddis = random_ddis(10, 0.25, 4);
  const auto b = split_cold_start(10, ddis, 0.2, 4);
  ASSERT_EQ(b.held_out.size(), 2u);
  const std::set<std::size_t> held(b.held_out.begin(), b.held_out.end());
  auto touches = [&](const LabeledPair& p) { return held.contains(p.i) || held.contains(p.j); };
  for (const auto& p : b.train) EXPECT_FALSE(touches(p));
  for (const auto& p : b.validation) EXPECT_FALSE(touches(p));
  for (const auto& p : b.test) EXPECT_TRUE(touches(p));
  expect_well_formed(b, ddis);
}

TEST(ColdStart, CeilingHoldsOutAtLeastOne) {
  const auto ddis = random_ddis(30, 0.1, 6);
  EXPECT_EQ(split_cold_start(30, ddis, 0.01, 6).held_out.size(), 1u);
  EXPECT_THROW(split_cold_start(30, ddis, 0.0, 6), ParameterError);
  EXPECT_THROW(split_cold_start(30, ddis, 1.0, 6), ParameterError);
}

TEST(ColdStart, DatasetScaleHeldOutCount) {
  // 513 drugs at fraction 0.2 hold out ceil(102.6) = 103.
  const auto ddis = random_ddis(513, 0.09, 8);
  const auto b = split_cold_start(513, ddis, 0.2, 8);
  EXPECT_EQ(b.held_out.size(), 103u);
  const std::set<std::size_t> held(b.held_out.begin(), b.held_out.end());
  for (const auto& p : b.train) EXPECT_FALSE(held.contains(p.i) || held.contains(p.j));
}

TEST(ColdStart, AllPositivesHeldOutIsAnError) {
  const std::vector<DrugPair> ddis{{0, 1}};
  // Either endpoint held out leaves nothing to train on.
  EXPECT_THROW(split_cold_start(2, ddis, 0.5, 0), ContractError);
}

TEST(ColdStart, ValidationIsTenPercentOfRemaining) {
  const auto ddis = random_ddis(40, 0.3, 9);
  const auto b = split_cold_start(40, ddis, 0.2, 9);
  const auto pos = [](const std::vector<LabeledPair>& v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [](auto& p) { return p.label == 1; }));
  };
  EXPECT_NEAR(pos(b.validation) / (pos(b.train) + pos(b.validation)), 0.1, 0.01);
}
