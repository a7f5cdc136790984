#pragma once

// Elementwise, reduction, dense and sequence ops with analytic gradients.
// No implicit broadcasting: shapes must match exactly except where an op
// documents a bias or scalar operand.

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "hitok/rng.hpp"
#include "hitok/tensor.hpp"

namespace hitok {

namespace detail {

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

// Applies f elementwise with derivative df(x, y) used in backward.
template <class Real, class F, class DF>
Tensor<Real> unary(const Tensor<Real>& x, const char* op, F f, DF df) {
  std::vector<Real> out(x.size());
  const auto& in = x.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op<Real>(op, x.shape(), std::move(out), {x}, [df](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xin = *self.parents[0]->data;
    const auto& y = *self.data;
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += self.grad[i] * df(xin[i], y[i]);
  });
}

}  // namespace detail

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op<Real>("add", a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Real* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op<Real>("sub", a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (Real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op<Real>("mul", a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    const auto& av = *self.parents[0]->data;
    const auto& bv = *self.parents[1]->data;
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (Real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  return detail::unary<Real>(
      a, "scale", [s](Real x) { return x * s; }, [s](Real, Real) { return s; });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s) {
  return detail::unary<Real>(
      a, "add_scalar", [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

template <class Real>
Tensor<Real> abs(const Tensor<Real>& a) {
  return detail::unary<Real>(
      a, "abs", [](Real x) { return std::abs(x); },
      [](Real x, Real) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

template <class Real>
Tensor<Real> square(const Tensor<Real>& a) {
  return detail::unary<Real>(
      a, "square", [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return detail::unary<Real>(
      a, "sigmoid", [](Real x) { return Real(1) / (Real(1) + std::exp(-x)); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Tensor<Real> silu(const Tensor<Real>& a) {
  return detail::unary<Real>(
      a, "silu", [](Real x) { return x / (Real(1) + std::exp(-x)); },
      [](Real x, Real) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return s * (Real(1) + x * (Real(1) - s));
      });
}

// Exact (erf) GELU.
template <class Real>
Tensor<Real> gelu(const Tensor<Real>& a) {
  constexpr Real kInvSqrt2 = Real(0.70710678118654752440);
  constexpr Real kInvSqrt2Pi = Real(0.39894228040143267794);
  return detail::unary<Real>(
      a, "gelu", [](Real x) { return Real(0.5) * x * (Real(1) + std::erf(x * kInvSqrt2)); },
      [](Real x, Real) {
        const Real cdf = Real(0.5) * (Real(1) + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(Real(-0.5) * x * x);
      });
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real s = 0;
  for (const Real v : a.vec()) s += v;
  return make_op<Real>("sum", {}, {s}, {a}, [](Node<Real>& self) {
    if (Real* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->data->size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  return scale(sum(a), Real(1) / static_cast<Real>(a.size()));
}

// Weighted sum of scalar tensors.
template <class Real>
Tensor<Real> weighted_sum(const std::vector<Tensor<Real>>& terms, const std::vector<Real>& w) {
  if (terms.size() != w.size() || terms.empty()) throw ShapeError("weighted_sum: size mismatch");
  Real s = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    s += w[i] * terms[i].item();
  }
  return make_op<Real>("weighted_sum", {}, {s}, terms, [w](Node<Real>& self) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (Real* g = parent_grad(self, i)) g[0] += w[i] * self.grad[0];
    }
  });
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make_op<Real>("reshape", std::move(shape), a.vec(), {a}, [](Node<Real>& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// Concatenation along axis 0. Trailing extents must agree.
template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw ShapeError("concat: scalar input");
  std::size_t rows = 0;
  std::vector<Real> out;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat: incompatible shape " + to_string(p.shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.vec().begin(), p.vec().end());
  }
  shape[0] = rows;
  return make_op<Real>("concat", std::move(shape), std::move(out), parts, [](Node<Real>& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->data->size();
      if (Real* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

// Rows [begin, end) along axis 0.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for " + to_string(a.shape()));
  }
  const std::size_t row = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<Real> out(a.vec().begin() + begin * row, a.vec().begin() + end * row);
  return make_op<Real>("slice", std::move(shape), std::move(out), {a}, [begin, row](Node<Real>& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * row + i] += self.grad[i];
    }
  });
}

// y = x W + b for x [N, in], W [in, out], b [out] (optional).
template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, std::type_identity_t<const Tensor<Real>*> b = nullptr) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("linear: x " + to_string(x.shape()) + " W " + to_string(w.shape()));
  }
  const std::size_t n = x.dim(0), in = w.dim(0), out_dim = w.dim(1);
  if (b && (b->rank() != 1 || b->dim(0) != out_dim)) throw ShapeError("linear: bias shape");
  std::vector<Real> y(n * out_dim, Real(0));
  const Real* xv = x.vec().data();
  const Real* wv = w.vec().data();
  for (std::size_t i = 0; i < n; ++i) {
    Real* yr = y.data() + i * out_dim;
    if (b) {
      for (std::size_t j = 0; j < out_dim; ++j) yr[j] = (*b)[j];
    }
    for (std::size_t k = 0; k < in; ++k) {
      const Real xk = xv[i * in + k];
      const Real* wr = wv + k * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) yr[j] += xk * wr[j];
    }
  }
  std::vector<Tensor<Real>> parents{x, w};
  if (b) parents.push_back(*b);
  return make_op<Real>("linear", {n, out_dim}, std::move(y), std::move(parents),
                       [n, in, out_dim](Node<Real>& self) {
    const Real* gy = self.grad.data();
    const Real* xv = self.parents[0]->data->data();
    const Real* wv = self.parents[1]->data->data();
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < in; ++k) {
          const Real* wr = wv + k * out_dim;
          const Real* gr = gy + i * out_dim;
          Real acc = 0;
          for (std::size_t j = 0; j < out_dim; ++j) acc += wr[j] * gr[j];
          gx[i * in + k] += acc;
        }
      }
    }
    if (Real* gw = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        const Real* gr = gy + i * out_dim;
        for (std::size_t k = 0; k < in; ++k) {
          const Real xk = xv[i * in + k];
          Real* gwr = gw + k * out_dim;
          for (std::size_t j = 0; j < out_dim; ++j) gwr[j] += xk * gr[j];
        }
      }
    }
    if (self.parents.size() > 2) {
      if (Real* gb = parent_grad(self, 2)) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gy[i * out_dim + j];
        }
      }
    }
  });
}

// Layer normalization over the last axis of x [N, D].
template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps = Real(1e-5)) {
  if (x.rank() != 2 || gamma.size() != x.dim(1) || beta.size() != x.dim(1)) {
    throw ShapeError("layer_norm: x " + to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<Real> y(x.size()), xhat(x.size()), rstd(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real* xr = x.vec().data() + i * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(d);
    rstd[i] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xr[j] - mu) * rstd[i];
      y[i * d + j] = xhat[i * d + j] * gamma[j] + beta[j];
    }
  }
  return make_op<Real>("layer_norm", x.shape(), std::move(y), {x, gamma, beta},
                       [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<Real>& self) {
    const Real* gy = self.grad.data();
    const auto& gam = *self.parents[1]->data;
    if (Real* gg = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n * d; ++i) gg[i % d] += gy[i] * xhat[i];
    }
    if (Real* gb = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < n * d; ++i) gb[i % d] += gy[i];
    }
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        Real s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const Real g = gy[i * d + j] * gam[j];
          s1 += g;
          s2 += g * xhat[i * d + j];
        }
        s1 /= static_cast<Real>(d);
        s2 /= static_cast<Real>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const Real g = gy[i * d + j] * gam[j];
          gx[i * d + j] += rstd[i] * (g - s1 - xhat[i * d + j] * s2);
        }
      }
    }
  });
}

// x / rms(x) over the last axis, no learned parameters. Any rank.
template <class Real>
Tensor<Real> rms_normalize(const Tensor<Real>& x, Real eps = Real(1e-6)) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) == 0) throw ShapeError("rms_normalize: x " + to_string(x.shape()));
  const std::size_t d = x.dim(x.rank() - 1), n = x.size() / d;
  std::vector<Real> y(x.size()), rinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real* xr = x.vec().data() + i * d;
    Real ms = 0;
    for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
    rinv[i] = Real(1) / std::sqrt(ms / static_cast<Real>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = xr[j] * rinv[i];
  }
  auto yc = y;
  return make_op<Real>("rms_normalize", x.shape(), std::move(y), {x},
                       [n, d, y = std::move(yc), rinv = std::move(rinv)](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    const Real* gy = self.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      Real s = 0;
      for (std::size_t j = 0; j < d; ++j) s += gy[i * d + j] * y[i * d + j];
      s /= static_cast<Real>(d);
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += rinv[i] * (gy[i * d + j] - y[i * d + j] * s);
    }
  });
}

// Group normalization of a channel-last video activation x [T, H, W, C].
// Statistics are taken per frame (over H, W and the channels of one group),
// which keeps the op temporally causal.
template <class Real>
Tensor<Real> group_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        std::size_t groups, Real eps = Real(1e-5)) {
  if (x.rank() != 4) throw ShapeError("group_norm: expected [T,H,W,C], got " + to_string(x.shape()));
  const std::size_t t_len = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  if (groups == 0 || c % groups != 0 || gamma.size() != c || beta.size() != c) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels, " + std::to_string(groups) + " groups");
  }
  const std::size_t cg = c / groups;
  const Real count = static_cast<Real>(hw * cg);
  std::vector<Real> y(x.size()), xhat(x.size()), rstd(t_len * groups);
  const Real* xv = x.vec().data();
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t g = 0; g < groups; ++g) {
      Real mu = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        const Real* px = xv + (t * hw + p) * c + g * cg;
        for (std::size_t k = 0; k < cg; ++k) mu += px[k];
      }
      mu /= count;
      Real var = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        const Real* px = xv + (t * hw + p) * c + g * cg;
        for (std::size_t k = 0; k < cg; ++k) var += (px[k] - mu) * (px[k] - mu);
      }
      var /= count;
      const Real r = Real(1) / std::sqrt(var + eps);
      rstd[t * groups + g] = r;
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t base = (t * hw + p) * c + g * cg;
        for (std::size_t k = 0; k < cg; ++k) {
          xhat[base + k] = (xv[base + k] - mu) * r;
          y[base + k] = xhat[base + k] * gamma[g * cg + k] + beta[g * cg + k];
        }
      }
    }
  }
  return make_op<Real>("group_norm", x.shape(), std::move(y), {x, gamma, beta},
                       [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<Real>& self) {
    const Real* gy = self.grad.data();
    const auto& gam = *self.parents[1]->data;
    const std::size_t total = t_len * hw * c;
    if (Real* gg = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < total; ++i) gg[i % c] += gy[i] * xhat[i];
    }
    if (Real* gb = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < total; ++i) gb[i % c] += gy[i];
    }
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t g = 0; g < groups; ++g) {
          Real s1 = 0, s2 = 0;
          for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = (t * hw + p) * c + g * cg;
            for (std::size_t k = 0; k < cg; ++k) {
              const Real d = gy[base + k] * gam[g * cg + k];
              s1 += d;
              s2 += d * xhat[base + k];
            }
          }
          s1 /= count;
          s2 /= count;
          const Real r = rstd[t * groups + g];
          for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = (t * hw + p) * c + g * cg;
            for (std::size_t k = 0; k < cg; ++k) {
              const Real d = gy[base + k] * gam[g * cg + k];
              gx[base + k] += r * (d - s1 - xhat[base + k] * s2);
            }
          }
        }
      }
    }
  });
}

// Softmax over the last axis.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  std::vector<Real> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.vec().data() + r * d;
    Real* yr = y.data() + r * d;
    const Real m = *std::max_element(xr, xr + d);
    Real z = 0;
    for (std::size_t j = 0; j < d; ++j) z += (yr[j] = std::exp(xr[j] - m));
    for (std::size_t j = 0; j < d; ++j) yr[j] /= z;
  }
  return make_op<Real>("softmax", x.shape(), std::move(y), {x}, [rows, d](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& y = *self.data;
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[r * d + j] * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (self.grad[r * d + j] - dot);
    }
  });
}

// Mean cross-entropy of logits [N, V] against integer targets.
template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const std::vector<std::uint32_t>& targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size() || targets.empty()) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  std::vector<Real> probs(logits.size());
  Real loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= v) throw ShapeError("cross_entropy: target out of range");
    const Real* xr = logits.vec().data() + i * v;
    const Real m = *std::max_element(xr, xr + v);
    Real z = 0;
    for (std::size_t j = 0; j < v; ++j) z += (probs[i * v + j] = std::exp(xr[j] - m));
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    loss += std::log(z) + m - xr[targets[i]];
  }
  loss /= static_cast<Real>(n);
  return make_op<Real>("cross_entropy", {}, {loss}, {logits},
                       [n, v, targets, probs = std::move(probs)](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    const Real g = self.grad[0] / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < v; ++j) {
        gx[i * v + j] += g * (probs[i * v + j] - (j == targets[i] ? Real(1) : Real(0)));
      }
    }
  });
}

// Row gather: out[i] = table[ids[i]] for table [V, D].
template <class Real>
Tensor<Real> embedding(const Tensor<Real>& table, const std::vector<std::uint32_t>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V,D]");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<Real> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.vec().data() + ids[i] * d, d, out.data() + i * d);
  }
  return make_op<Real>("embedding", {ids.size(), d}, std::move(out), {table}, [ids, d](Node<Real>& self) {
    Real* gt = parent_grad(self, 0);
    if (!gt) return;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += self.grad[i * d + j];
    }
  });
}

// Adds a row vector b [D] to every row of x [N, D].
template <class Real>
Tensor<Real> add_row(const Tensor<Real>& x, const Tensor<Real>& b) {
  if (x.rank() != 2 || b.size() != x.dim(1)) throw ShapeError("add_row: shape mismatch");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<Real> out(x.vec());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += b[j];
  }
  return make_op<Real>("add_row", x.shape(), std::move(out), {x, b}, [n, d](Node<Real>& self) {
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n * d; ++i) gx[i] += self.grad[i];
    }
    if (Real* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n * d; ++i) gb[i % d] += self.grad[i];
    }
  });
}

// Inverted dropout; identity when p == 0.
template <class Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) return scale(x, Real(0));
  const Real keep = static_cast<Real>(1.0 / (1.0 - p));
  std::vector<Real> mask(x.size());
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? Real(0) : keep;
    out[i] = x[i] * mask[i];
  }
  return make_op<Real>("dropout", x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node<Real>& self) {
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
    }
  });
}

}  // namespace hitok
