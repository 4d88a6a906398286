#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "pav/scores.hpp"
#include "support.hpp"

using namespace pav;
using namespace pav::testing;

namespace {

const MetricScale kVideoScale{kVQ, 1.0, 4.0, 0.0, 5.0};

ScoredId scored(int id, const Row& row) { return {id, row_vector(row)}; }

std::vector<ScoredId> spa_population() {
  return {scored(0, kRowOriginal), scored(1, kRowRefined1), scored(2, kRowRefined2), scored(3, kRowRefined3)};
}

ScoreVector random_vector(std::mt19937_64& rng, bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_int_distribution<int> q(0, 4);
  Row row{};
  for (auto& v : row) v = coarse ? static_cast<double>(q(rng)) : u(rng);
  return row_vector(row);
}

// Quadratic selection oracle: repeatedly extract the best remaining candidate.
std::vector<int> oracle_order(std::vector<ScoredId> pool) {
  auto sum = [](const ScoredId& c) {
    double s = 0.0;
    for (const auto& [m, v] : c.scores.normalized()) s += v;
    return s;
  };
  std::vector<int> out;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const double a = sum(pool[i]);
      const double b = sum(pool[best]);
      const double ta = *pool[i].scores.norm(kTVA);
      const double tb = *pool[best].scores.norm(kTVA);
      if (a > b || (a == b && (ta > tb || (ta == tb && pool[i].id < pool[best].id)))) best = i;
    }
    out.push_back(pool[best].id);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

}  // namespace

TEST(Normalize, LowerEndpointMapsToTargetMin) { EXPECT_EQ(normalize(1.0, kVideoScale), 0.0); }

TEST(Normalize, UpperEndpointMapsToTargetMax) { EXPECT_EQ(normalize(4.0, kVideoScale), 5.0); }

TEST(Normalize, MidpointByHand) { EXPECT_NEAR(normalize(2.5, kVideoScale), 1.5 / 3.0 * 5.0, 1e-12); }

TEST(Normalize, ClampsOutOfRangeAndCounts) {
  const auto before = normalize_clamp_count();
  EXPECT_EQ(normalize(-100.0, kVideoScale), 0.0);
  EXPECT_EQ(normalize(100.0, kVideoScale), 5.0);
  EXPECT_EQ(normalize(std::numeric_limits<double>::infinity(), kVideoScale), 5.0);
  EXPECT_EQ(normalize(-std::numeric_limits<double>::max(), kVideoScale), 0.0);
  EXPECT_GE(normalize_clamp_count(), before + 4);
}

TEST(Normalize, MonotoneOverRandomScales) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    double lo = u(rng), hi = u(rng);
    if (lo == hi) continue;
    if (lo > hi) std::swap(lo, hi);
    const MetricScale s{kAES, lo, hi, 0.0, 5.0};
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const double na = normalize(a, s), nb = normalize(b, s);
    EXPECT_LE(na, nb);
    EXPECT_GE(na, 0.0);
    EXPECT_LE(nb, 5.0);
  }
}

TEST(Normalize, InvalidScaleRejected) {
  EXPECT_THROW((MetricScale{kVQ, 2.0, 2.0}.validate()), ScoreError);
  EXPECT_THROW((MetricScale{kVQ, 1.0, 2.0, 5.0, 0.0}.validate()), ScoreError);
}

TEST(DefaultScale, KnownRanges) {
  EXPECT_EQ(default_scale(kVQ).raw_min, 1.0);
  EXPECT_EQ(default_scale(kVQ).raw_max, 4.0);
  EXPECT_EQ(default_scale(kAES).raw_max, 10.0);
  EXPECT_EQ(default_scale(kMPS).raw_max, 15.0);
  EXPECT_EQ(default_scale(MetricId::extension("CLIP")).raw_max, 1.0);
}

TEST(Overall, SpaOriginalRow) { EXPECT_NEAR(overall(row_vector(kRowOriginal)), kSumOriginal, 1e-9); }

TEST(Overall, SpaRefinedRows) {
  EXPECT_NEAR(overall(row_vector(kRowRefined1)), kSumRefined1, 1e-9);
  EXPECT_NEAR(overall(row_vector(kRowRefined2)), kSumRefined2, 1e-9);
  EXPECT_NEAR(overall(row_vector(kRowRefined3)), kSumRefined3, 1e-9);
}

TEST(Overall, AllZero) { EXPECT_EQ(overall(row_vector(Row{})), 0.0); }

TEST(Overall, EmptyVectorIsError) { EXPECT_THROW((void)overall(ScoreVector{}), ScoreError); }

TEST(Overall, AdditiveOverDisjointMetricSets) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const auto scales = identity_scales();
  for (int i = 0; i < 200; ++i) {
    MetricValues a, b, ab;
    const auto core = MetricId::core_set();
    for (std::size_t k = 0; k < core.size(); ++k) {
      const double v = u(rng);
      (k < 3 ? a : b).emplace(core[k], v);
      ab.emplace(core[k], v);
    }
    const double lhs = overall(ScoreVector::from_raw(ab, scales));
    const double rhs = overall(ScoreVector::from_raw(a, scales)) + overall(ScoreVector::from_raw(b, scales));
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Rank, SpaRows) {
  const auto pop = spa_population();
  EXPECT_EQ(rank(pop), (std::vector<int>{1, 3, 2, 0}));
}

TEST(Rank, SingleCandidate) {
  const std::vector<ScoredId> one{scored(42, kRowOriginal)};
  EXPECT_EQ(rank(one), std::vector<int>{42});
}

TEST(Rank, IdenticalVectorsByIdAscending) {
  const std::vector<ScoredId> pop{scored(9, kRowRefined2), scored(4, kRowRefined2)};
  EXPECT_EQ(rank(pop), (std::vector<int>{4, 9}));
}

TEST(Rank, EqualSumsPreferHigherTva) {
  // Same sum, TVA differs.
  const std::vector<ScoredId> pop{scored(1, Row{3, 3, 3, 2, 3, 3, 3}), scored(2, Row{3, 3, 2, 3, 3, 3, 3})};
  EXPECT_EQ(rank(pop), (std::vector<int>{2, 1}));
}

TEST(Rank, HeterogeneousMetricSetsRejected) {
  const auto scales = identity_scales();
  const std::vector<ScoredId> pop{{1, ScoreVector::from_raw({{kVQ, 1.0}}, scales)},
                                  {2, ScoreVector::from_raw({{kTC, 1.0}}, scales)}};
  EXPECT_THROW((void)rank(pop), ScoreError);
}

TEST(Rank, PermutationInvariantAndIsPermutation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredId> pop;
    for (int i = 0; i < 8; ++i) pop.push_back({i, random_vector(rng, true)});
    const auto a = rank(pop);
    std::shuffle(pop.begin(), pop.end(), rng);
    const auto b = rank(pop);
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> ids(8);
    std::iota(ids.begin(), ids.end(), 0);
    EXPECT_EQ(sorted, ids);
  }
}

TEST(SelectTopN, SpaTopThree) {
  const auto pop = spa_population();
  EXPECT_EQ(select_top_n(pop, 3), (std::vector<int>{1, 3, 2}));
}

TEST(SelectTopN, NBeyondSizeReturnsWholeRanking) {
  const auto pop = spa_population();
  EXPECT_EQ(select_top_n(pop, 10), rank(pop));
}

TEST(SelectTopN, NonPositiveNRejected) {
  const auto pop = spa_population();
  EXPECT_THROW((void)select_top_n(pop, 0), ScoreError);
}

TEST(SelectTopN, MatchesQuadraticOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredId> pop;
    for (int i = 0; i < 10; ++i) pop.push_back({i * 3 % 10, random_vector(rng, trial % 2 == 0)});
    const int n = 1 + static_cast<int>(rng() % 10);
    auto expected = oracle_order(pop);
    expected.resize(static_cast<std::size_t>(n));
    EXPECT_EQ(select_top_n(pop, n), expected);
  }
}

TEST(SelectTopN, PrefixProperty) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredId> pop;
    for (int i = 0; i < 9; ++i) pop.push_back({i, random_vector(rng, true)});
    for (int n = 1; n < 9; ++n) {
      const auto a = select_top_n(pop, n);
      const auto b = select_top_n(pop, n + 1);
      const std::set<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
      EXPECT_TRUE(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
    }
  }
}

TEST(SelectTopN, ParetoFrontFirst) {
  // 1 dominates 3; 2 is incomparable with 1 but has the lowest sum.
  const std::vector<ScoredId> pop{scored(1, Row{4, 4, 4, 4, 4, 4, 0}), scored(2, Row{0, 0, 0, 0, 0, 0, 5}),
                                  scored(3, Row{3, 3, 3, 3, 3, 3, 0})};
  EXPECT_EQ(select_top_n(pop, 3, SelectionRule::Sum), (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(select_top_n(pop, 3, SelectionRule::Pareto), (std::vector<int>{1, 2, 3}));
}

TEST(Thresholds, AllZeroPasses) {
  ThresholdPolicy p;
  for (const auto& m : MetricId::core_set()) p.per_metric_min.emplace(m, 0.0);
  EXPECT_TRUE(passes_thresholds(row_vector(kRowOriginal), p));
  EXPECT_TRUE(passes_thresholds(row_vector(Row{}), p));
}

TEST(Thresholds, SpaVqThreshold) {
  ThresholdPolicy p;
  p.per_metric_min.emplace(kVQ, 2.6);
  EXPECT_TRUE(passes_thresholds(row_vector(kRowRefined1), p));
  EXPECT_FALSE(passes_thresholds(row_vector(kRowOriginal), p));
}

TEST(Thresholds, InclusiveBoundary) {
  ThresholdPolicy p;
  p.per_metric_min.emplace(kVQ, 2.63);
  EXPECT_TRUE(passes_thresholds(row_vector(kRowRefined1), p));
}

TEST(Thresholds, OutOfTargetIntervalRejected) {
  ThresholdPolicy p;
  p.per_metric_min.emplace(kVQ, 6.0);
  const auto scales = identity_scales();
  EXPECT_THROW(p.validate(scales), ScoreError);
}

TEST(ScoreJson, RoundTrip) {
  const auto sv = row_vector(kRowRefined3);
  EXPECT_EQ(score_vector_from_json(nlohmann::json::parse(to_json(sv).dump())), sv);
}

TEST(MetricIdTest, ParseAndOrder) {
  EXPECT_EQ(MetricId::parse("TVA"), kTVA);
  EXPECT_FALSE(MetricId::parse("CLIP").is_core());
  EXPECT_TRUE(kMPS < MetricId::parse("CLIP"));
  EXPECT_THROW((void)MetricId::parse(""), ScoreError);
}
