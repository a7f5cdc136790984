#pragma once

// Procedural moving-shape clips with template captions, and an oracle that
// checks a clip against a caption attribute by attribute.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "hitok/rng.hpp"
#include "hitok/video.hpp"

namespace hitok::synth {

enum class ShapeKind { kSquare, kCircle, kTriangle };
enum class Color { kRed, kGreen, kBlue };
enum class Motion { kLeft, kRight, kUp, kDown };

inline constexpr std::array<const char*, 3> kShapeWords{"square", "circle", "triangle"};
inline constexpr std::array<const char*, 3> kColorWords{"red", "green", "blue"};
inline constexpr std::array<const char*, 4> kMotionWords{"left", "right", "up", "down"};

inline constexpr float kBackground = 0.5f;

struct SceneSpec {
  ShapeKind shape = ShapeKind::kSquare;
  Color color = Color::kRed;
  Motion motion = Motion::kRight;
  int speed = 1;  // pixels per frame
  int x0 = 0, y0 = 0;  // top-left of the object's bounding box at frame 0
  int size = 10;
  float background = kBackground;
};

struct Clip {
  VideoBlock video;
  std::string caption;
};

inline std::string caption_for(const SceneSpec& s) {
  return std::string("a ") + kColorWords[static_cast<int>(s.color)] + " " + kShapeWords[static_cast<int>(s.shape)] +
         " moves " + kMotionWords[static_cast<int>(s.motion)];
}

inline std::array<int, 2> motion_vector(Motion m) {
  switch (m) {
    case Motion::kLeft: return {-1, 0};
    case Motion::kRight: return {1, 0};
    case Motion::kUp: return {0, -1};
    case Motion::kDown: return {0, 1};
  }
  return {0, 0};
}

// Whether pixel (r, c) of an s x s bounding box belongs to the shape.
inline bool inside(ShapeKind k, int size, int r, int c) {
  const double s = size;
  const double pr = r + 0.5, pc = c + 0.5;
  switch (k) {
    case ShapeKind::kSquare: return true;
    case ShapeKind::kCircle: {
      const double d = (pr - s / 2) * (pr - s / 2) + (pc - s / 2) * (pc - s / 2);
      return d <= (s / 2) * (s / 2);
    }
    case ShapeKind::kTriangle: {
      // Apex at the top centre, base along the bottom row.
      const double half = (pr / s) * s / 2;
      return std::abs(pc - s / 2) <= half;
    }
  }
  return false;
}

// Rasterizes the object moving linearly; positions are clamped so the object
// stays fully inside the frame. Channels: 3 (RGB).
inline Clip make_clip(const SceneSpec& spec, std::size_t t_len, std::size_t h, std::size_t w) {
  if (spec.size < 1 || static_cast<std::size_t>(spec.size) > std::min(h, w)) throw UsageError("make_clip: object does not fit");
  Clip clip{VideoBlock(t_len, h, w, 3, spec.background), caption_for(spec)};
  const auto [dx, dy] = motion_vector(spec.motion);
  const int max_x = static_cast<int>(w) - spec.size, max_y = static_cast<int>(h) - spec.size;
  const int ch = static_cast<int>(spec.color);
  for (std::size_t t = 0; t < t_len; ++t) {
    const int x = std::clamp(spec.x0 + dx * spec.speed * static_cast<int>(t), 0, max_x);
    const int y = std::clamp(spec.y0 + dy * spec.speed * static_cast<int>(t), 0, max_y);
    for (int r = 0; r < spec.size; ++r) {
      for (int c = 0; c < spec.size; ++c) {
        if (!inside(spec.shape, spec.size, r, c)) continue;
        for (int k = 0; k < 3; ++k) clip.video.at(t, y + r, x + c, k) = k == ch ? 1.f : 0.f;
      }
    }
  }
  return clip;
}

// Draws a spec uniformly from the grammar. Object size is 8-12 px at 32 px
// and scales with the frame; the start is chosen so that no clamping occurs.
inline SceneSpec random_spec(Rng& rng, std::size_t t_len, std::size_t h, std::size_t w) {
  SceneSpec s;
  s.shape = static_cast<ShapeKind>(rng.uniform_int(3));
  s.color = static_cast<Color>(rng.uniform_int(3));
  s.motion = static_cast<Motion>(rng.uniform_int(4));
  const double scale = static_cast<double>(std::min(h, w)) / 32.0;
  const int lo = std::max(2, static_cast<int>(std::lround(8 * scale)));
  const int hi = std::max(lo, std::min(static_cast<int>(std::lround(12 * scale)), static_cast<int>(std::min(h, w))));
  s.size = lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  const auto [dx, dy] = motion_vector(s.motion);
  const int travel = static_cast<int>(t_len) - 1;
  const int extent = dx != 0 ? static_cast<int>(w) : static_cast<int>(h);
  s.speed = travel + s.size <= extent ? 1 : 0;
  const int max_x = static_cast<int>(w) - s.size, max_y = static_cast<int>(h) - s.size;
  auto pick = [&](int lo_v, int hi_v) { return lo_v + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi_v - lo_v + 1))); };
  const int span = travel * s.speed;
  s.x0 = dx > 0 ? pick(0, max_x - span) : dx < 0 ? pick(span, max_x) : pick(0, max_x);
  s.y0 = dy > 0 ? pick(0, max_y - span) : dy < 0 ? pick(span, max_y) : pick(0, max_y);
  return s;
}

inline std::vector<Clip> dataset(std::uint64_t seed, std::size_t count, std::size_t t_len, std::size_t h, std::size_t w) {
  if (count < 1) throw UsageError("dataset: count must be >= 1");
  Rng rng(seed);
  std::vector<Clip> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_clip(random_spec(rng, t_len, h, w), t_len, h, w));
  return out;
}

// ---------------------------------------------------------------------------
// Caption vocabulary

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v{"<pad>", "<bos>",  "<uncond>", "<unk>", "a",    "moves", "red",
                                          "green", "blue",   "square",   "circle", "triangle", "left", "right",
                                          "up",    "down"};
  return v;
}

inline constexpr std::uint32_t kPadId = 0;
inline constexpr std::uint32_t kBosId = 1;
inline constexpr std::uint32_t kUncondId = 2;
inline constexpr std::uint32_t kUnkId = 3;

// <bos> followed by word ids, right-padded with <pad> to text_len.
inline std::vector<std::uint32_t> tokenize_caption(const std::string& caption, std::size_t text_len) {
  const auto& vocab = vocabulary();
  std::vector<std::uint32_t> ids{kBosId};
  std::istringstream in(caption);
  std::string word;
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = std::find(vocab.begin(), vocab.end(), word);
    ids.push_back(it == vocab.end() ? kUnkId : static_cast<std::uint32_t>(it - vocab.begin()));
  }
  if (ids.size() > text_len) throw UsageError("caption longer than text length " + std::to_string(text_len));
  ids.resize(text_len, kPadId);
  return ids;
}

// ---------------------------------------------------------------------------
// Caption oracle

struct OracleResult {
  bool has_foreground = false;
  bool color = false;
  bool shape = false;
  bool motion = false;
  std::string detected_color, detected_shape, detected_motion;

  bool all() const { return color && shape && motion; }
};

inline constexpr float kForegroundThreshold = 0.25f;

inline OracleResult caption_oracle(const VideoBlock& v, const std::string& caption) {
  OracleResult r;
  if (v.c != 3 || v.t == 0) return r;
  // Background per channel: the clip median (the object covers a minority of pixels).
  std::array<float, 3> bg{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::vector<float> vals;
    vals.reserve(v.t * v.h * v.w);
    for (std::size_t i = ch; i < v.size(); i += 3) vals.push_back(v.values[i]);
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    bg[ch] = vals[vals.size() / 2];
  }
  auto is_fg = [&](std::size_t t, std::size_t y, std::size_t x) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      if (std::abs(v.at(t, y, x, ch) - bg[ch]) > kForegroundThreshold) return true;
    }
    return false;
  };

  std::array<std::size_t, 3> color_votes{};
  std::vector<std::array<double, 3>> centroid(v.t, {0, 0, 0});  // x, y, count
  double fill_sum = 0;
  std::size_t fill_frames = 0;
  for (std::size_t t = 0; t < v.t; ++t) {
    std::size_t y0 = v.h, y1 = 0, x0 = v.w, x1 = 0, n = 0;
    for (std::size_t y = 0; y < v.h; ++y) {
      for (std::size_t x = 0; x < v.w; ++x) {
        if (!is_fg(t, y, x)) continue;
        ++n;
        y0 = std::min(y0, y), y1 = std::max(y1, y), x0 = std::min(x0, x), x1 = std::max(x1, x);
        centroid[t][0] += static_cast<double>(x);
        centroid[t][1] += static_cast<double>(y);
        std::size_t best = 0;
        for (std::size_t ch = 1; ch < 3; ++ch) {
          if (v.at(t, y, x, ch) - bg[ch] > v.at(t, y, x, best) - bg[best]) best = ch;
        }
        ++color_votes[best];
      }
    }
    centroid[t][2] = static_cast<double>(n);
    if (n > 0) {
      fill_sum += static_cast<double>(n) / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      ++fill_frames;
    }
  }
  if (fill_frames == 0) return r;
  r.has_foreground = true;

  const auto best_color = std::max_element(color_votes.begin(), color_votes.end()) - color_votes.begin();
  r.detected_color = kColorWords[best_color];

  const double fill = fill_sum / static_cast<double>(fill_frames);
  const std::array<double, 3> ideal{1.0, M_PI / 4.0, 0.5};
  std::size_t best_shape = 0;
  for (std::size_t k = 1; k < 3; ++k) {
    if (std::abs(fill - ideal[k]) < std::abs(fill - ideal[best_shape])) best_shape = k;
  }
  r.detected_shape = kShapeWords[best_shape];

  const auto& first = centroid.front();
  const auto& last = centroid.back();
  if (first[2] > 0 && last[2] > 0) {
    const double dx = last[0] / last[2] - first[0] / first[2];
    const double dy = last[1] / last[2] - first[1] / first[2];
    if (dx != 0 || dy != 0) {
      r.detected_motion = std::abs(dx) >= std::abs(dy) ? (dx > 0 ? "right" : "left") : (dy > 0 ? "down" : "up");
    }
  }

  std::istringstream in(caption);
  std::string word;
  while (in >> word) {
    if (word == r.detected_color) r.color = true;
    if (word == r.detected_shape) r.shape = true;
    if (!r.detected_motion.empty() && word == r.detected_motion) r.motion = true;
  }
  return r;
}

// Flips a clip along the axis of the given motion (left/right: horizontal).
inline VideoBlock mirror_along(const VideoBlock& v, Motion m) {
  VideoBlock out(v.t, v.h, v.w, v.c);
  const bool horizontal = m == Motion::kLeft || m == Motion::kRight;
  for (std::size_t t = 0; t < v.t; ++t) {
    for (std::size_t y = 0; y < v.h; ++y) {
      for (std::size_t x = 0; x < v.w; ++x) {
        const std::size_t sy = horizontal ? y : v.h - 1 - y;
        const std::size_t sx = horizontal ? v.w - 1 - x : x;
        for (std::size_t ch = 0; ch < v.c; ++ch) out.at(t, y, x, ch) = v.at(t, sy, sx, ch);
      }
    }
  }
  return out;
}

}  // namespace hitok::synth
