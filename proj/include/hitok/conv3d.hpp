#pragma once

// Temporally causal 3D convolutions over channel-last clips [T, H, W, C].
//
// Kernels are laid out [kt, kh, kw, Cin, Cout]. The time axis is padded only
// in front with kt-1 frames, so output frame t of a stride-st conv reads input
// frames (t*st - kt + 1) .. t*st. Spatial axes use "same" padding of
// (k-1)/2 zeros in front before striding.
//
// The transposed conv is defined as zero-stuffing by the stride (x[i] placed
// at i*stride) followed by a stride-1 causal conv, which gives an output of
// exactly stride times the input extent on each axis.

#include <array>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "hitok/tensor.hpp"

namespace hitok {

struct Stride3 {
  std::size_t t = 1, h = 1, w = 1;

  friend bool operator==(const Stride3&, const Stride3&) = default;
};

// What the front temporal padding holds.
enum class TemporalPad {
  kZero,       // zeros
  kReplicate,  // copies of the first (virtual) frame
};

namespace detail {

// For one axis, maps (output index, tap) to a real input index or -1.
struct AxisTaps {
  std::size_t out_len = 0;
  std::size_t k = 1;
  std::vector<std::ptrdiff_t> idx;  // out_len * k

  static AxisTaps build(std::size_t in_len, std::size_t k, std::size_t stride, std::size_t up,
                        std::size_t pad, bool replicate) {
    AxisTaps a;
    a.k = k;
    a.out_len = up == 1 ? (in_len + stride - 1) / stride : in_len * up;
    a.idx.assign(a.out_len * k, -1);
    const auto virt_len = static_cast<std::ptrdiff_t>(in_len * up);
    for (std::size_t o = 0; o < a.out_len; ++o) {
      for (std::size_t t = 0; t < k; ++t) {
        std::ptrdiff_t v = static_cast<std::ptrdiff_t>(o * stride + t) - static_cast<std::ptrdiff_t>(pad);
        if (v < 0 && replicate) v = 0;
        if (v < 0 || v >= virt_len || v % static_cast<std::ptrdiff_t>(up) != 0) continue;
        a.idx[o * k + t] = v / static_cast<std::ptrdiff_t>(up);
      }
    }
    return a;
  }
};

template <class Real>
Tensor<Real> conv3d_core(const char* op, const Tensor<Real>& x, const Tensor<Real>& kernel,
                         const Tensor<Real>* bias, const std::array<AxisTaps, 3>& ax) {
  const std::size_t in_h = x.dim(1), in_w = x.dim(2), cin = x.dim(3);
  const std::size_t cout = kernel.dim(4);
  const std::size_t kt = ax[0].k, kh = ax[1].k, kw = ax[2].k;
  const std::size_t ot_len = ax[0].out_len, oh_len = ax[1].out_len, ow_len = ax[2].out_len;
  std::vector<Real> out(ot_len * oh_len * ow_len * cout, Real(0));
  const Real* xv = x.vec().data();
  const Real* wv = kernel.vec().data();
  // Taps sit outside the output row so one tap's [Cin, Cout] slice stays in
  // cache across the row. Per-element summation order is still bias, then
  // taps in (t, h, w) order, then input channels.
  for (std::size_t ot = 0; ot < ot_len; ++ot) {
    for (std::size_t oh = 0; oh < oh_len; ++oh) {
      Real* row = out.data() + (ot * oh_len + oh) * ow_len * cout;
      if (bias) {
        for (std::size_t ow = 0; ow < ow_len; ++ow) {
          for (std::size_t co = 0; co < cout; ++co) row[ow * cout + co] = (*bias)[co];
        }
      }
      for (std::size_t at = 0; at < kt; ++at) {
        const auto it = ax[0].idx[ot * kt + at];
        if (it < 0) continue;
        for (std::size_t ah = 0; ah < kh; ++ah) {
          const auto ih = ax[1].idx[oh * kh + ah];
          if (ih < 0) continue;
          const Real* xrow = xv + (static_cast<std::size_t>(it) * in_h + static_cast<std::size_t>(ih)) * in_w * cin;
          for (std::size_t aw = 0; aw < kw; ++aw) {
            const Real* wk = wv + ((at * kh + ah) * kw + aw) * cin * cout;
            for (std::size_t ow = 0; ow < ow_len; ++ow) {
              const auto iw = ax[2].idx[ow * kw + aw];
              if (iw < 0) continue;
              const Real* xin = xrow + static_cast<std::size_t>(iw) * cin;
              Real* acc = row + ow * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const Real xval = xin[ci];
                const Real* wr = wk + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) acc[co] += xval * wr[co];
              }
            }
          }
        }
      }
    }
  }
  std::vector<Tensor<Real>> parents{x, kernel};
  if (bias) parents.push_back(*bias);
  return make_op<Real>(op, {ot_len, oh_len, ow_len, cout}, std::move(out), std::move(parents),
                       [=](Node<Real>& self) {
    const Real* xv = self.parents[0]->data->data();
    const Real* wv = self.parents[1]->data->data();
    Real* gx = parent_grad(self, 0);
    Real* gw = parent_grad(self, 1);
    Real* gb = self.parents.size() > 2 ? parent_grad(self, 2) : nullptr;
    const Real* gy = self.grad.data();
    const std::size_t taps = kt * kh * kw;
    // Kernel as [tap, Cout, Cin] so the input-gradient update runs along Cin.
    std::vector<Real> wt;
    if (gx) {
      wt.resize(taps * cin * cout);
      for (std::size_t k = 0; k < taps; ++k) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t co = 0; co < cout; ++co) wt[(k * cout + co) * cin + ci] = wv[(k * cin + ci) * cout + co];
        }
      }
    }
    for (std::size_t ot = 0; ot < ot_len; ++ot) {
      for (std::size_t oh = 0; oh < oh_len; ++oh) {
        const Real* grow = gy + (ot * oh_len + oh) * ow_len * cout;
        if (gb) {
          for (std::size_t ow = 0; ow < ow_len; ++ow) {
            for (std::size_t co = 0; co < cout; ++co) gb[co] += grow[ow * cout + co];
          }
        }
        for (std::size_t at = 0; at < kt; ++at) {
          const auto it = ax[0].idx[ot * kt + at];
          if (it < 0) continue;
          for (std::size_t ah = 0; ah < kh; ++ah) {
            const auto ih = ax[1].idx[oh * kh + ah];
            if (ih < 0) continue;
            const std::size_t xrow = (static_cast<std::size_t>(it) * in_h + static_cast<std::size_t>(ih)) * in_w * cin;
            for (std::size_t aw = 0; aw < kw; ++aw) {
              const std::size_t k = (at * kh + ah) * kw + aw;
              for (std::size_t ow = 0; ow < ow_len; ++ow) {
                const auto iw = ax[2].idx[ow * kw + aw];
                if (iw < 0) continue;
                const std::size_t xoff = xrow + static_cast<std::size_t>(iw) * cin;
                const Real* go = grow + ow * cout;
                if (gx) {
                  Real* gxr = gx + xoff;
                  const Real* wk = wt.data() + k * cout * cin;
                  for (std::size_t co = 0; co < cout; ++co) {
                    const Real g = go[co];
                    const Real* wr = wk + co * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) gxr[ci] += g * wr[ci];
                  }
                }
                if (gw) {
                  Real* gwk = gw + k * cin * cout;
                  for (std::size_t ci = 0; ci < cin; ++ci) {
                    const Real xval = xv[xoff + ci];
                    Real* gwr = gwk + ci * cout;
                    for (std::size_t co = 0; co < cout; ++co) gwr[co] += xval * go[co];
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

template <class Real>
void check_conv_args(const char* op, const Tensor<Real>& x, const Tensor<Real>& kernel,
                     const Tensor<Real>* bias, const Stride3& s) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": input must be [T,H,W,C], got " + to_string(x.shape()));
  if (kernel.rank() != 5) throw ShapeError(std::string(op) + ": kernel must be [kt,kh,kw,Cin,Cout]");
  if (kernel.dim(0) < 1 || kernel.dim(1) < 1 || kernel.dim(2) < 1) throw ShapeError(std::string(op) + ": empty kernel");
  if (kernel.dim(3) != x.dim(3)) {
    throw ShapeError(std::string(op) + ": kernel expects " + std::to_string(kernel.dim(3)) +
                     " input channels, got " + std::to_string(x.dim(3)));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != kernel.dim(4))) throw ShapeError(std::string(op) + ": bias shape");
  if (s.t < 1 || s.h < 1 || s.w < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
}

}  // namespace detail

// Output shape [ceil(T/st), ceil(H/sh), ceil(W/sw), Cout].
template <class Real>
Tensor<Real> causal_conv3d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::type_identity_t<const Tensor<Real>*> bias,
                           Stride3 stride = {}, TemporalPad pad = TemporalPad::kZero) {
  detail::check_conv_args("causal_conv3d", x, kernel, bias, stride);
  const std::size_t kt = kernel.dim(0), kh = kernel.dim(1), kw = kernel.dim(2);
  const std::array<detail::AxisTaps, 3> ax{
      detail::AxisTaps::build(x.dim(0), kt, stride.t, 1, kt - 1, pad == TemporalPad::kReplicate),
      detail::AxisTaps::build(x.dim(1), kh, stride.h, 1, (kh - 1) / 2, false),
      detail::AxisTaps::build(x.dim(2), kw, stride.w, 1, (kw - 1) / 2, false)};
  return detail::conv3d_core("causal_conv3d", x, kernel, bias, ax);
}

// Output shape [T*st, H*sh, W*sw, Cout].
template <class Real>
Tensor<Real> transpose_causal_conv3d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::type_identity_t<const Tensor<Real>*> bias,
                                     Stride3 stride = {}, TemporalPad pad = TemporalPad::kZero) {
  detail::check_conv_args("transpose_causal_conv3d", x, kernel, bias, stride);
  const std::size_t kt = kernel.dim(0), kh = kernel.dim(1), kw = kernel.dim(2);
  const std::array<detail::AxisTaps, 3> ax{
      detail::AxisTaps::build(x.dim(0), kt, 1, stride.t, kt - 1, pad == TemporalPad::kReplicate),
      detail::AxisTaps::build(x.dim(1), kh, 1, stride.h, (kh - 1) / 2, false),
      detail::AxisTaps::build(x.dim(2), kw, 1, stride.w, (kw - 1) / 2, false)};
  return detail::conv3d_core("transpose_causal_conv3d", x, kernel, bias, ax);
}

// Nearest-neighbour upsampling: out[t,h,w] = x[t/st, h/sh, w/sw].
template <class Real>
Tensor<Real> upsample_nearest3d(const Tensor<Real>& x, Stride3 s) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest3d: input must be [T,H,W,C]");
  if (s.t < 1 || s.h < 1 || s.w < 1) throw ShapeError("upsample_nearest3d: factor must be >= 1");
  const std::size_t t_in = x.dim(0), h_in = x.dim(1), w_in = x.dim(2), c = x.dim(3);
  const std::size_t t_out = t_in * s.t, h_out = h_in * s.h, w_out = w_in * s.w;
  std::vector<Real> out(t_out * h_out * w_out * c);
  auto src = [=](std::size_t t, std::size_t h, std::size_t w) {
    return ((t / s.t * h_in + h / s.h) * w_in + w / s.w) * c;
  };
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t h = 0; h < h_out; ++h) {
      for (std::size_t w = 0; w < w_out; ++w) {
        std::copy_n(x.vec().data() + src(t, h, w), c, out.data() + ((t * h_out + h) * w_out + w) * c);
      }
    }
  }
  return make_op<Real>("upsample_nearest3d", {t_out, h_out, w_out, c}, std::move(out), {x}, [=](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t h = 0; h < h_out; ++h) {
        for (std::size_t w = 0; w < w_out; ++w) {
          const Real* go = self.grad.data() + ((t * h_out + h) * w_out + w) * c;
          Real* gi = gx + src(t, h, w);
          for (std::size_t k = 0; k < c; ++k) gi[k] += go[k];
        }
      }
    }
  });
}

}  // namespace hitok
