#include <gtest/gtest.h>

#include <algorithm>

#include "hitok/dyn_mask.hpp"
#include "test_util.hpp"

namespace hitok {
namespace {

TEST(DiffMatrix, StaticCodesScoreZero) {
  const Dims3 s{4, 2, 3};
  std::vector<std::uint32_t> idx(s.count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i % 6);
  const auto d = diff_matrix(idx, s, 4);
  ASSERT_EQ(d.size(), 3u * 6u);
  for (double v : d) EXPECT_EQ(v, 0.0);
}

TEST(DiffMatrix, FullFlipScoresOne) {
  const Dims3 s{3, 1, 2};
  const std::vector<std::uint32_t> idx{0, 15, 15, 0, 0, 15};
  for (double v : diff_matrix(idx, s, 4)) EXPECT_EQ(v, 1.0);
}

TEST(DiffMatrix, MatchesBitOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims3 s{3, 2, 2};
    std::vector<std::uint32_t> idx(s.count());
    for (auto& v : idx) v = static_cast<std::uint32_t>(rng.uniform_int(16));
    const auto d = diff_matrix(idx, s, 4);
    ASSERT_EQ(d.size(), 8u);
    for (std::size_t t = 1; t < 3; ++t) {
      for (std::size_t p = 0; p < 4; ++p) {
        const auto a = lfq::index_to_signs(idx[t * 4 + p], 4), b = lfq::index_to_signs(idx[(t - 1) * 4 + p], 4);
        int differ = 0;
        for (std::size_t i = 0; i < 4; ++i) differ += a[i] != b[i];
        EXPECT_DOUBLE_EQ(d[(t - 1) * 4 + p], differ / 4.0);
      }
    }
  }
}

TEST(DiffMatrix, SingleFrameHasNoScores) { EXPECT_TRUE(diff_matrix({1, 2}, {1, 1, 2}, 2).empty()); }

TEST(BuildMask, EqualScoresMaskNothing) {
  Rng rng(2);
  const auto plan = build_mask(std::vector<double>(12, 0.25), {4, 1, 4}, 0.85, rng);
  EXPECT_TRUE(plan.empty());
}

TEST(BuildMask, FourOfFiveBelowMean) {
  Rng rng(3);
  const auto plan = build_mask({0, 0, 0, 0, 10}, {2, 1, 5}, 0.85, rng);
  EXPECT_EQ(plan.mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 1, 1, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(plan.masked_fraction(), 0.8);
}

TEST(BuildMask, CapForcesSampling) {
  Rng rng(4);
  std::vector<double> scores(20, 0.0);
  scores[19] = 1.0;  // 19 candidates, cap allows floor(0.5 * 20) = 10
  const auto plan = build_mask(scores, {2, 4, 5}, 0.5, rng);
  EXPECT_EQ(plan.masked_count(), 10u);
  EXPECT_EQ(plan.mask[20 + 19], 0);
}

TEST(BuildMask, RejectsBadCap) {
  Rng rng(5);
  EXPECT_THROW(build_mask({0.0}, {2, 1, 1}, 0.0, rng), UsageError);
  EXPECT_THROW(build_mask({0.0}, {2, 1, 1}, 1.5, rng), UsageError);
}

// Oracle for the candidate rule: strictly below the arithmetic mean.
std::vector<std::size_t> below_mean(const std::vector<double>& s) {
  double m = 0;
  for (double v : s) m += v;
  m /= static_cast<double>(s.size());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < m) out.push_back(i);
  }
  return out;
}

TEST(BuildMask, PropertySweep) {
  Rng rng(6);
  std::size_t sampled = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Dims3 shape{2 + rng.uniform_int(4), 1 + rng.uniform_int(4), 1 + rng.uniform_int(4)};
    const std::size_t n = (shape.t - 1) * shape.h * shape.w;
    std::vector<double> scores(n);
    // Skewed scores so the candidate set often exceeds the cap.
    for (auto& v : scores) v = rng.bernoulli(0.1) ? 1.0 : rng.uniform(0, 0.1) * static_cast<double>(rng.uniform_int(2));
    const double cap = rng.bernoulli(0.5) ? 0.85 : rng.uniform(0.05, 1.0);
    const auto plan = build_mask(scores, shape, cap, rng);
    const std::size_t plane = shape.h * shape.w;
    for (std::size_t p = 0; p < plane; ++p) ASSERT_EQ(plan.mask[p], 0);
    ASSERT_LE(plan.masked_fraction(), cap + 1e-12);
    const auto cand = below_mean(scores);
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.mask[plane + i]) masked.push_back(i);
    }
    ASSERT_TRUE(std::includes(cand.begin(), cand.end(), masked.begin(), masked.end()));
    const auto limit = static_cast<std::size_t>(std::floor(cap * static_cast<double>(n) + 1e-9));
    if (cand.size() <= limit) {
      ASSERT_EQ(masked, cand);
    } else {
      ASSERT_EQ(masked.size(), limit);
      ++sampled;
    }
  }
  EXPECT_GT(sampled, 50u);
}

TEST(BuildMask, DeterministicGivenSeed) {
  std::vector<double> scores(45);
  Rng g(7);
  for (auto& v : scores) v = g.uniform() < 0.9 ? 0.0 : 1.0;
  Rng a(9), b(9);
  EXPECT_EQ(build_mask(scores, {4, 3, 5}, 0.3, a).mask, build_mask(scores, {4, 3, 5}, 0.3, b).mask);
}

TEST(ApplyMask, EmptyMaskIsIdentity) {
  Rng rng(8);
  const auto g = testing::random_tensor<float>({3, 2, 2, 4}, rng);
  EXPECT_EQ(apply_mask(g, empty_plan({3, 2, 2})).vec(), g.vec());
}

TEST(ApplyMask, RepeatPrevChainsToFrameZero) {
  Rng rng(9);
  const auto g = testing::random_tensor<float>({4, 2, 3, 2}, rng);
  MaskPlan plan = empty_plan({4, 2, 3});
  std::fill(plan.mask.begin() + 6, plan.mask.end(), 1);
  const auto y = apply_mask(g, plan);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], g[i % 12]);
}

TEST(ApplyMask, ZeroStrategyTouchesOnlyMasked) {
  Rng rng(10);
  const auto g = testing::random_tensor<float>({2, 2, 2, 3}, rng);
  MaskPlan plan = empty_plan({2, 2, 2}, MaskStrategy::kZero);
  plan.mask[5] = 1;
  const auto y = apply_mask(g, plan);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], i / 3 == 5 ? 0.f : g[i]);
}

TEST(ApplyMask, LearnedWritesVector) {
  Rng rng(11);
  const auto g = testing::random_tensor<float>({2, 1, 2, 2}, rng);
  const auto tok = Tensor<float>::from({2}, {0.5f, -0.25f});
  MaskPlan plan = empty_plan({2, 1, 2}, MaskStrategy::kLearned);
  plan.mask[3] = 1;
  const auto y = apply_mask(g, plan, &tok);
  EXPECT_EQ(y[6], 0.5f);
  EXPECT_EQ(y[7], -0.25f);
  EXPECT_EQ(y[4], g[4]);
}

TEST(ApplyMask, StrategyParameterMismatch) {
  const auto g = Tensor<float>::zeros({2, 1, 1, 2});
  const auto tok = Tensor<float>::zeros({2});
  EXPECT_THROW(apply_mask(g, empty_plan({2, 1, 1}, MaskStrategy::kLearned)), UsageError);
  EXPECT_THROW(apply_mask(g, empty_plan({2, 1, 1}, MaskStrategy::kZero), &tok), UsageError);
}

TEST(ApplyMask, FrameZeroRejected) {
  MaskPlan plan = empty_plan({2, 1, 1});
  plan.mask[0] = 1;
  EXPECT_THROW(apply_mask(Tensor<float>::zeros({2, 1, 1, 1}), plan), UsageError);
}

TEST(ApplyMask, StaticGridRepeatIsExact) {
  Rng rng(12);
  const auto frame = testing::random_tensor<double>({1, 2, 2, 3}, rng);
  const auto g = concat(std::vector<Tensor<double>>(5, frame));
  const auto scores = diff_matrix(lfq::quantize(g, 3).indices, {5, 2, 2}, 3);
  MaskPlan plan = empty_plan({5, 2, 2});
  for (std::size_t i = 4; i < plan.mask.size(); ++i) plan.mask[i] = rng.bernoulli(0.85);
  for (double s : scores) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(apply_mask(g, plan).vec(), g.vec());
}

}  // namespace
}  // namespace hitok
