#include <gtest/gtest.h>

#include <cmath>

#include "hitok/metrics.hpp"
#include "hitok/rng.hpp"

namespace hitok::metrics {
namespace {

VideoBlock random_video(std::size_t t, std::size_t h, std::size_t w, std::size_t c, Rng& rng, float lo = 0, float hi = 1) {
  VideoBlock v(t, h, w, c);
  for (auto& x : v.values) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

TEST(Psnr, IdenticalIsCapped) {
  Rng rng(1);
  const auto a = random_video(2, 8, 8, 3, rng);
  EXPECT_EQ(psnr(a, a), 99.0);
}

TEST(Psnr, ConstantOffsetIs20dB) {
  // Base values on a 2^-20 grid below 0.025 keep a + 0.1f exact.
  Rng rng(2);
  VideoBlock a(3, 8, 8, 3);
  for (auto& x : a.values) x = static_cast<float>(rng.uniform_int(25000)) * 0x1.0p-20f;
  auto b = a;
  for (auto& x : b.values) x += 0.1f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-6);
}

TEST(Psnr, MatchesDirectOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_video(4, 5, 7, 3, rng), b = random_video(4, 5, 7, 3, rng);
    double sum = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      double se = 0;
      std::size_t n = 0;
      for (std::size_t y = 0; y < 5; ++y) {
        for (std::size_t x = 0; x < 7; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = static_cast<double>(a.at(t, y, x, c)) - b.at(t, y, x, c);
            se += d * d;
            ++n;
          }
        }
      }
      sum += 10 * std::log10(1.0 / (se / static_cast<double>(n)));
    }
    EXPECT_NEAR(psnr(a, b), sum / 4, 1e-9);
  }
}

TEST(Psnr, ShapeMismatch) { EXPECT_THROW(psnr(VideoBlock(1, 2, 2, 3), VideoBlock(1, 2, 3, 3)), ShapeError); }

TEST(Ssim, IdenticalIsOne) {
  Rng rng(4);
  const auto a = random_video(2, 16, 16, 3, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, InvertedIsBelowOne) {
  Rng rng(5);
  const auto a = random_video(1, 16, 16, 1, rng);
  auto b = a;
  for (auto& x : b.values) x = 1.f - x;
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Ssim, ConstantFramesLuminanceOnly) {
  const VideoBlock a(1, 8, 8, 1, 0.3f), b(1, 8, 8, 1, 0.7f);
  const double a0 = static_cast<double>(0.3f), b0 = static_cast<double>(0.7f);
  const double expect = (2 * a0 * b0 + kSsimC1) / (a0 * a0 + b0 * b0 + kSsimC1);
  EXPECT_NEAR(ssim(a, b), expect, 1e-9);
  EXPECT_NEAR(ssim(a, b), 0.7241, 1e-4);
}

TEST(Ssim, WindowTooLarge) { EXPECT_THROW(ssim(VideoBlock(1, 4, 4, 1), VideoBlock(1, 4, 4, 1)), ShapeError); }

TEST(Metrics, SymmetricAndFramePermutationInvariant) {
  Rng rng(6);
  const auto a = random_video(3, 16, 16, 3, rng), b = random_video(3, 16, 16, 3, rng);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
  auto swap_frames = [](const VideoBlock& v) {
    VideoBlock o = v;
    const std::size_t fs = v.frame_size();
    for (std::size_t i = 0; i < fs; ++i) std::swap(o.values[i], o.values[2 * fs + i]);
    return o;
  };
  EXPECT_NEAR(psnr(swap_frames(a), swap_frames(b)), psnr(a, b), 1e-12);
  EXPECT_NEAR(ssim(swap_frames(a), swap_frames(b)), ssim(a, b), 1e-12);
}

TEST(Metrics, ReportJson) {
  Rng rng(7);
  const auto a = random_video(2, 8, 8, 3, rng), b = random_video(2, 8, 8, 3, rng);
  const auto r = evaluate(a, b);
  EXPECT_EQ(r.psnr_per_frame.size(), 2u);
  const auto j = to_json(r);
  EXPECT_DOUBLE_EQ(j.at("psnr_db").get<double>(), r.psnr_db);
  EXPECT_DOUBLE_EQ(j.at("ssim").get<double>(), r.ssim);
}

}  // namespace
}  // namespace hitok::metrics
