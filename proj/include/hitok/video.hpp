#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "hitok/config.hpp"
#include "hitok/error.hpp"
#include "hitok/tensor.hpp"

namespace hitok {

// A T x H x W x C clip with intensities in [0, 1], frame-major, channel-last.
struct VideoBlock {
  std::size_t t = 0, h = 0, w = 0, c = 0;
  std::vector<float> values;

  VideoBlock() = default;
  VideoBlock(std::size_t t_, std::size_t h_, std::size_t w_, std::size_t c_, float fill = 0.f)
      : t(t_), h(h_), w(w_), c(c_), values(t_ * h_ * w_ * c_, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t frame_size() const { return h * w * c; }
  std::size_t index(std::size_t ti, std::size_t y, std::size_t x, std::size_t ch) const {
    return ((ti * h + y) * w + x) * c + ch;
  }
  float& at(std::size_t ti, std::size_t y, std::size_t x, std::size_t ch) { return values[index(ti, y, x, ch)]; }
  float at(std::size_t ti, std::size_t y, std::size_t x, std::size_t ch) const { return values[index(ti, y, x, ch)]; }

  bool same_shape(const VideoBlock& o) const { return t == o.t && h == o.h && w == o.w && c == o.c; }
  friend bool operator==(const VideoBlock&, const VideoBlock&) = default;
};

// Maps [0,1] intensities to a [-1,1] network input of shape [T,H,W,C].
template <class Real>
Tensor<Real> to_network_input(const VideoBlock& v) {
  std::vector<Real> d(v.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<Real>(2.0 * v.values[i] - 1.0);
  return Tensor<Real>::from({v.t, v.h, v.w, v.c}, std::move(d));
}

// Inverse of to_network_input, clamped to [0,1].
template <class Real>
VideoBlock from_network_output(const Tensor<Real>& y) {
  if (y.rank() != 4) throw ShapeError("from_network_output: expected [T,H,W,C]");
  VideoBlock v(y.dim(0), y.dim(1), y.dim(2), y.dim(3));
  for (std::size_t i = 0; i < v.size(); ++i) {
    v.values[i] = std::clamp(static_cast<float>((static_cast<double>(y[i]) + 1.0) * 0.5), 0.f, 1.f);
  }
  return v;
}

// Nearest-neighbour spatial resampling of every frame.
inline VideoBlock resample_nearest(const VideoBlock& v, std::size_t new_h, std::size_t new_w) {
  if (new_h == v.h && new_w == v.w) return v;
  VideoBlock out(v.t, new_h, new_w, v.c);
  for (std::size_t t = 0; t < v.t; ++t) {
    for (std::size_t y = 0; y < new_h; ++y) {
      const std::size_t sy = y * v.h / new_h;
      for (std::size_t x = 0; x < new_w; ++x) {
        const std::size_t sx = x * v.w / new_w;
        for (std::size_t ch = 0; ch < v.c; ++ch) out.at(t, y, x, ch) = v.at(t, sy, sx, ch);
      }
    }
  }
  return out;
}

}  // namespace hitok
