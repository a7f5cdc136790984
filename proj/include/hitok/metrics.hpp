#pragma once

#include <cmath>
#include <vector>

#include "json.hpp"

#include "hitok/video.hpp"

namespace hitok::metrics {

inline constexpr double kPsnrCap = 99.0;
inline constexpr std::size_t kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct MetricReport {
  double psnr_db = 0;
  double ssim = 0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
};

inline void require_same_shape(const VideoBlock& a, const VideoBlock& b) {
  if (!a.same_shape(b)) throw ShapeError("metrics: videos differ in shape");
  if (a.t == 0) throw ShapeError("metrics: empty video");
}

inline std::vector<double> psnr_per_frame(const VideoBlock& a, const VideoBlock& b) {
  require_same_shape(a, b);
  std::vector<double> out(a.t);
  const std::size_t fs = a.frame_size();
  for (std::size_t t = 0; t < a.t; ++t) {
    double se = 0;
    for (std::size_t i = 0; i < fs; ++i) {
      const double d = static_cast<double>(a.values[t * fs + i]) - static_cast<double>(b.values[t * fs + i]);
      se += d * d;
    }
    const double mse = se / static_cast<double>(fs);
    out[t] = mse <= 0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return out;
}

// Peak signal-to-noise ratio with MAX = 1, averaged over frames.
inline double psnr(const VideoBlock& a, const VideoBlock& b) {
  const auto f = psnr_per_frame(a, b);
  double s = 0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

// SSIM with a uniform 8x8 window moved in steps of 8, computed per channel.
inline std::vector<double> ssim_per_frame(const VideoBlock& a, const VideoBlock& b) {
  require_same_shape(a, b);
  if (a.h < kSsimWindow || a.w < kSsimWindow) throw ShapeError("ssim: frames smaller than the 8x8 window");
  std::vector<double> out(a.t);
  const double n = static_cast<double>(kSsimWindow * kSsimWindow);
  for (std::size_t t = 0; t < a.t; ++t) {
    double total = 0;
    std::size_t windows = 0;
    for (std::size_t ch = 0; ch < a.c; ++ch) {
      for (std::size_t y0 = 0; y0 + kSsimWindow <= a.h; y0 += kSsimWindow) {
        for (std::size_t x0 = 0; x0 + kSsimWindow <= a.w; x0 += kSsimWindow) {
          double sa = 0, sb = 0;
          for (std::size_t y = y0; y < y0 + kSsimWindow; ++y) {
            for (std::size_t x = x0; x < x0 + kSsimWindow; ++x) {
              sa += a.at(t, y, x, ch);
              sb += b.at(t, y, x, ch);
            }
          }
          const double ma = sa / n, mb = sb / n;
          double va = 0, vb = 0, cov = 0;
          for (std::size_t y = y0; y < y0 + kSsimWindow; ++y) {
            for (std::size_t x = x0; x < x0 + kSsimWindow; ++x) {
              const double da = a.at(t, y, x, ch) - ma, db = b.at(t, y, x, ch) - mb;
              va += da * da;
              vb += db * db;
              cov += da * db;
            }
          }
          va /= n;
          vb /= n;
          cov /= n;
          total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                   ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
          ++windows;
        }
      }
    }
    out[t] = total / static_cast<double>(windows);
  }
  return out;
}

inline double ssim(const VideoBlock& a, const VideoBlock& b) {
  const auto f = ssim_per_frame(a, b);
  double s = 0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

inline MetricReport evaluate(const VideoBlock& ref, const VideoBlock& out) {
  MetricReport r;
  r.psnr_per_frame = psnr_per_frame(ref, out);
  r.ssim_per_frame = ssim_per_frame(ref, out);
  for (double v : r.psnr_per_frame) r.psnr_db += v;
  for (double v : r.ssim_per_frame) r.ssim += v;
  r.psnr_db /= static_cast<double>(r.psnr_per_frame.size());
  r.ssim /= static_cast<double>(r.ssim_per_frame.size());
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"psnr_db", r.psnr_db},
          {"ssim", r.ssim},
          {"psnr_per_frame", r.psnr_per_frame},
          {"ssim_per_frame", r.ssim_per_frame}};
}

}  // namespace hitok::metrics
