#include <gtest/gtest.h>

#include <set>

#include "hitok/synth_data.hpp"

namespace hitok::synth {
namespace {

double centroid_x(const VideoBlock& v, std::size_t t) {
  double sx = 0, n = 0;
  for (std::size_t y = 0; y < v.h; ++y) {
    for (std::size_t x = 0; x < v.w; ++x) {
      if (std::abs(v.at(t, y, x, 0) - kBackground) > 0.25f) sx += static_cast<double>(x), n += 1;
    }
  }
  return sx / n;
}

TEST(MakeClip, SpeedZeroIsStatic) {
  SceneSpec s;
  s.speed = 0;
  s.x0 = 5;
  s.y0 = 7;
  const auto c = make_clip(s, 16, 32, 32);
  const std::size_t fs = c.video.frame_size();
  for (std::size_t t = 1; t < 16; ++t) {
    for (std::size_t i = 0; i < fs; ++i) ASSERT_EQ(c.video.values[t * fs + i], c.video.values[i]);
  }
}

TEST(MakeClip, RedSquareMovesOnePixelPerFrame) {
  SceneSpec s;
  s.x0 = 2;
  s.y0 = 4;
  const auto c = make_clip(s, 16, 32, 32);
  EXPECT_EQ(c.caption, "a red square moves right");
  for (std::size_t t = 1; t < 16; ++t) EXPECT_DOUBLE_EQ(centroid_x(c.video, t) - centroid_x(c.video, t - 1), 1.0);
  // Pure red object on gray.
  EXPECT_EQ(c.video.at(0, 6, 4, 0), 1.f);
  EXPECT_EQ(c.video.at(0, 6, 4, 1), 0.f);
  EXPECT_EQ(c.video.at(0, 0, 0, 2), kBackground);
}

TEST(MakeClip, Deterministic) {
  Rng a(3), b(3);
  const auto sa = random_spec(a, 16, 32, 32);
  const auto sb = random_spec(b, 16, 32, 32);
  EXPECT_EQ(make_clip(sa, 16, 32, 32).video, make_clip(sb, 16, 32, 32).video);
}

TEST(MakeClip, ObjectMustFit) {
  SceneSpec s;
  s.size = 40;
  EXPECT_THROW(make_clip(s, 4, 32, 32), UsageError);
}

TEST(Dataset, DeterministicAndSingleton) {
  const auto a = dataset(7, 100, 16, 32, 32), b = dataset(7, 100, 16, 32, 32);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].video, b[i].video);
    ASSERT_EQ(a[i].caption, b[i].caption);
  }
  EXPECT_EQ(dataset(7, 1, 16, 32, 32).size(), 1u);
  EXPECT_THROW(dataset(7, 0, 16, 32, 32), UsageError);
}

TEST(Dataset, CoversGrammar) {
  std::set<std::string> captions;
  for (const auto& c : dataset(11, 1000, 2, 32, 32)) captions.insert(c.caption);
  EXPECT_EQ(captions.size(), 36u);
}

TEST(Dataset, ObjectStaysInFrame) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_spec(rng, 16, 32, 32);
    const auto [dx, dy] = motion_vector(s.motion);
    for (int t = 0; t < 16; ++t) {
      const int x = s.x0 + dx * s.speed * t, y = s.y0 + dy * s.speed * t;
      ASSERT_GE(x, 0);
      ASSERT_GE(y, 0);
      ASSERT_LE(x + s.size, 32);
      ASSERT_LE(y + s.size, 32);
    }
    ASSERT_GE(s.size, 8);
    ASSERT_LE(s.size, 12);
    ASSERT_EQ(s.speed, 1);
  }
}

TEST(Oracle, PassesEveryGrammarSpec) {
  Rng rng(13);
  for (int sh = 0; sh < 3; ++sh) {
    for (int co = 0; co < 3; ++co) {
      for (int mo = 0; mo < 4; ++mo) {
        for (int size : {8, 10, 12}) {
          SceneSpec s = random_spec(rng, 16, 32, 32);
          s.shape = static_cast<ShapeKind>(sh);
          s.color = static_cast<Color>(co);
          s.motion = static_cast<Motion>(mo);
          s.size = size;
          const auto [dx, dy] = motion_vector(s.motion);
          s.x0 = dx < 0 ? 31 - size : dx > 0 ? 0 : 10;
          s.y0 = dy < 0 ? 31 - size : dy > 0 ? 0 : 10;
          s.x0 = std::max(0, std::min(s.x0, 32 - size - (dx > 0 ? 15 : 0)));
          s.y0 = std::max(0, std::min(s.y0, 32 - size - (dy > 0 ? 15 : 0)));
          if (dx < 0) s.x0 = std::max(s.x0, 15);
          if (dy < 0) s.y0 = std::max(s.y0, 15);
          const auto c = make_clip(s, 16, 32, 32);
          const auto r = caption_oracle(c.video, c.caption);
          EXPECT_TRUE(r.all()) << c.caption << " size " << size << " got " << r.detected_color << " "
                               << r.detected_shape << " " << r.detected_motion;
        }
      }
    }
  }
}

TEST(Oracle, PassesOnDataset) {
  for (const auto& c : dataset(14, 200, 16, 32, 32)) EXPECT_TRUE(caption_oracle(c.video, c.caption).all()) << c.caption;
}

TEST(Oracle, UniformGrayFails) {
  const VideoBlock v(16, 32, 32, 3, 0.5f);
  const auto r = caption_oracle(v, "a red square moves right");
  EXPECT_FALSE(r.has_foreground);
  EXPECT_FALSE(r.color);
  EXPECT_FALSE(r.shape);
  EXPECT_FALSE(r.motion);
}

TEST(Oracle, MirroredClipsFailMotion) {
  for (const auto& c : dataset(15, 100, 16, 32, 32)) {
    Motion m = Motion::kRight;
    for (std::size_t k = 0; k < 4; ++k) {
      if (c.caption.ends_with(kMotionWords[k])) m = static_cast<Motion>(k);
    }
    const auto r = caption_oracle(mirror_along(c.video, m), c.caption);
    EXPECT_FALSE(r.motion) << c.caption;
  }
}

TEST(Captions, TokenizeRightPadded) {
  const auto ids = tokenize_caption("a red square moves right", 8);
  ASSERT_EQ(ids.size(), 8u);
  EXPECT_EQ(ids[0], kBosId);
  EXPECT_EQ(vocabulary()[ids[2]], "red");
  EXPECT_EQ(vocabulary()[ids[5]], "right");
  EXPECT_EQ(ids[6], kPadId);
  EXPECT_EQ(ids[7], kPadId);
  EXPECT_EQ(tokenize_caption("a purple blob", 8)[2], kUnkId);
  EXPECT_THROW(tokenize_caption("a red square moves right", 5), UsageError);
}

}  // namespace
}  // namespace hitok::synth
