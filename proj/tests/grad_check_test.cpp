#include <gtest/gtest.h>

#include "grad_cases.hpp"

namespace hitok {
namespace {

class GradCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradCheck, FiniteDifferencesAgree) {
  const auto cases = testing::grad_cases();
  const auto& gc = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 7919);
    auto [inputs, f] = gc.make(rng);
    EXPECT_LT(testing::grad_check(inputs, f, seed), 1e-5) << gc.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradCheck, ::testing::Range<std::size_t>(0, testing::grad_cases().size()),
                         [](const auto& info) { return testing::grad_cases()[info.param].name; });

TEST(StraightThrough, QuantizeGradientIsIdentity) {
  Rng rng(1);
  auto z = testing::random_tensor<double>({4, 3}, rng, 1.0, true);
  backward(sum(lfq::quantize(z, 3).signs));
  for (double g : z.grad()) EXPECT_EQ(g, 1.0);
}

}  // namespace
}  // namespace hitok
