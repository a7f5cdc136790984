#include <gtest/gtest.h>

#include <cmath>

#include "hitok/lfq.hpp"
#include "test_util.hpp"

namespace hitok {
namespace {

TEST(Quantize, SignRule) {
  const auto c = lfq::quantize(Tensor<float>::from({1, 2}, {0.7f, -0.3f}), 2);
  EXPECT_EQ(c.signs.vec(), (std::vector<float>{1, -1}));
  EXPECT_EQ(c.indices, (std::vector<std::uint32_t>{1}));
}

TEST(Quantize, ZeroMapsToMinusOne) {
  const auto c = lfq::quantize(Tensor<float>::zeros({2, 3}), 3);
  for (float s : c.signs.vec()) EXPECT_EQ(s, -1.f);
  EXPECT_EQ(c.indices, (std::vector<std::uint32_t>{0, 0}));
}

TEST(Quantize, ChannelMismatch) { EXPECT_THROW(lfq::quantize(Tensor<float>::zeros({2, 3}), 4), ShapeError); }

TEST(Quantize, IndexMatchesSignBits) {
  Rng rng(3);
  const auto z = testing::random_tensor<double>({7, 5}, rng);
  const auto c = lfq::quantize(z, 5);
  for (std::size_t t = 0; t < 7; ++t) {
    std::uint32_t idx = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      const double s = c.signs[t * 5 + i];
      EXPECT_TRUE(s == 1.0 || s == -1.0);
      if (s == 1.0) idx += 1u << i;
    }
    EXPECT_EQ(c.indices[t], idx);
  }
}

TEST(Quantize, ScaleInvariantCodes) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = testing::random_tensor<double>({6, 8}, rng);
    const double c = std::exp(rng.uniform(-5, 5));
    EXPECT_EQ(lfq::quantize(z, 8).indices, lfq::quantize(scale(z, c), 8).indices);
  }
}

TEST(IndexToSigns, Examples) {
  EXPECT_EQ(lfq::index_to_signs(0, 3), (std::vector<int>{-1, -1, -1}));
  EXPECT_EQ(lfq::index_to_signs(5, 3), (std::vector<int>{1, -1, 1}));
  EXPECT_THROW(lfq::index_to_signs(8, 3), UsageError);
}

TEST(IndexToSigns, ExhaustiveBijection) {
  for (std::size_t qd = 1; qd <= 12; ++qd) {
    for (std::uint32_t i = 0; i < (1u << qd); ++i) ASSERT_EQ(lfq::signs_to_index(lfq::index_to_signs(i, qd)), i);
  }
}

TEST(SignsFromIndices, InverseOfQuantize) {
  Rng rng(5);
  const auto z = testing::random_tensor<float>({2, 3, 4}, rng);
  const auto c = lfq::quantize(z, 4);
  EXPECT_EQ(lfq::signs_from_indices<float>(c.indices, 4, {2, 3}).vec(), c.signs.vec());
}

// Oracle: the penalty written out directly from its definition.
double penalty_oracle(const std::vector<double>& z, std::size_t qd, double tau, double gamma) {
  const std::size_t n = z.size() / qd;
  auto h = [](double p) { return p <= 0 || p >= 1 ? 0.0 : -p * std::log(p) - (1 - p) * std::log(1 - p); };
  double per = 0;
  std::vector<double> pbar(qd, 0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < qd; ++i) {
      const double p = 1 / (1 + std::exp(-2 * z[t * qd + i] / tau));
      per += h(p);
      pbar[i] += p / static_cast<double>(n);
    }
  }
  double usage = 0;
  for (double p : pbar) usage += h(p);
  return per / static_cast<double>(n) - gamma * usage;
}

TEST(EntropyPenalty, MatchesDefinition) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto z = testing::random_tensor<double>({9, 4}, rng, 2.0);
    const double tau = rng.uniform(0.3, 2), gamma = rng.uniform(0, 2);
    EXPECT_NEAR(lfq::entropy_penalty(z, 4, {tau, gamma}).item(), penalty_oracle(z.vec(), 4, tau, gamma), 1e-10);
  }
}

TEST(EntropyPenalty, ZeroLatentClosedForm) {
  for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
    const auto v = lfq::entropy_penalty(Tensor<double>::zeros({5, 6}), 6, {1.0, gamma}).item();
    EXPECT_NEAR(v, (1 - gamma) * 6 * std::log(2.0), 1e-6);
  }
}

std::vector<double> saturated(std::size_t n, std::size_t qd, bool diverse, double mag) {
  std::vector<double> z(n * qd);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < qd; ++i) z[t * qd + i] = diverse ? ((t >> i) & 1 ? mag : -mag) : mag;
  }
  return z;
}

TEST(EntropyPenalty, DiverseBeatsCollapsed) {
  const std::size_t qd = 3, n = 8;
  const auto diverse = Tensor<double>::from({n, qd}, saturated(n, qd, true, 20.0));
  const auto collapsed = Tensor<double>::from({n, qd}, saturated(n, qd, false, 20.0));
  const double d = lfq::entropy_penalty(diverse, qd).item();
  const double c = lfq::entropy_penalty(collapsed, qd).item();
  EXPECT_LT(d, c);
  EXPECT_NEAR(c, 0.0, 1e-6);
  EXPECT_NEAR(d, -static_cast<double>(qd) * std::log(2.0), 1e-6);
}

// One bit with a denormal batch mean next to fully saturated tokens: the
// usage gradient must stay finite in float.
TEST(EntropyPenalty, GradientFiniteWhenBatchMeanIsDenormal) {
  const std::size_t qd = 2, n = 4;
  std::vector<float> v(n * qd, -60.f);
  v[0] = -44.f;
  v[1] = 3.f;
  auto z = Tensor<float>::from({n, qd}, v, true);
  const auto loss = lfq::entropy_penalty(z, qd);
  ASSERT_TRUE(std::isfinite(loss.item()));
  backward(loss);
  for (float g : z.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(EntropyPenalty, RejectsBadTau) {
  EXPECT_THROW(lfq::entropy_penalty(Tensor<double>::zeros({1, 2}), 2, {0.0, 1.0}), UsageError);
}

}  // namespace
}  // namespace hitok
