#pragma once

// Lookup-free quantization: each latent channel is quantized to its sign and
// the code index is the bit pattern of the signs (channel i -> bit i).

#include <cmath>
#include <cstdint>
#include <vector>

#include "hitok/tensor.hpp"

namespace hitok::lfq {

inline constexpr std::size_t kMaxQuantDim = 24;

template <class Real = float>
struct LfqCodes {
  std::size_t quant_dim = 0;
  Tensor<Real> signs;                   // same shape as the latent, values in {-1, +1}
  std::vector<std::uint32_t> indices;   // one per token, in raster order
};

inline void check_quant_dim(std::size_t qd) {
  if (qd < 1 || qd > kMaxQuantDim) throw UsageError("quant_dim must be in [1, " + std::to_string(kMaxQuantDim) + "]");
}

inline std::vector<int> index_to_signs(std::uint32_t index, std::size_t quant_dim) {
  check_quant_dim(quant_dim);
  if (index >= (std::uint32_t{1} << quant_dim)) {
    throw UsageError("index " + std::to_string(index) + " out of range for quant_dim " + std::to_string(quant_dim));
  }
  std::vector<int> s(quant_dim);
  for (std::size_t i = 0; i < quant_dim; ++i) s[i] = (index >> i) & 1u ? 1 : -1;
  return s;
}

template <class T>
std::uint32_t signs_to_index(const T* signs, std::size_t quant_dim) {
  std::uint32_t idx = 0;
  for (std::size_t i = 0; i < quant_dim; ++i) {
    if (signs[i] > 0) idx |= std::uint32_t{1} << i;
  }
  return idx;
}

inline std::uint32_t signs_to_index(const std::vector<int>& signs) {
  return signs_to_index(signs.data(), signs.size());
}

// Sign quantization with sign(0) = -1. The backward pass is the identity
// (straight-through estimator). The last axis of z holds the quant_dim bits.
template <class Real>
LfqCodes<Real> quantize(const Tensor<Real>& z, std::size_t quant_dim) {
  check_quant_dim(quant_dim);
  if (z.rank() == 0 || z.shape().back() != quant_dim) {
    throw ShapeError("lfq::quantize: expected " + std::to_string(quant_dim) + " channels, got shape " + to_string(z.shape()));
  }
  std::vector<Real> s(z.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = z[i] > 0 ? Real(1) : Real(-1);
  LfqCodes<Real> codes;
  codes.quant_dim = quant_dim;
  const std::size_t tokens = z.size() / quant_dim;
  codes.indices.resize(tokens);
  for (std::size_t t = 0; t < tokens; ++t) codes.indices[t] = signs_to_index(s.data() + t * quant_dim, quant_dim);
  codes.signs = make_op<Real>("lfq_quantize", z.shape(), std::move(s), {z}, [](Node<Real>& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
  return codes;
}

// Sign grid (no graph) for a set of indices; shape is token_shape + [quant_dim].
template <class Real>
Tensor<Real> signs_from_indices(const std::vector<std::uint32_t>& indices, std::size_t quant_dim, Shape token_shape) {
  check_quant_dim(quant_dim);
  if (numel(token_shape) != indices.size()) throw ShapeError("signs_from_indices: token count mismatch");
  std::vector<Real> v(indices.size() * quant_dim);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    if (indices[t] >= (std::uint32_t{1} << quant_dim)) throw UsageError("signs_from_indices: index out of range");
    for (std::size_t i = 0; i < quant_dim; ++i) v[t * quant_dim + i] = (indices[t] >> i) & 1u ? Real(1) : Real(-1);
  }
  token_shape.push_back(quant_dim);
  return Tensor<Real>::from(std::move(token_shape), std::move(v));
}

namespace detail {

template <class Real>
Real softplus(Real x) {
  return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x)));
}

// Binary entropy (nats) of sigmoid(u).
template <class Real>
Real entropy_of_logit(Real u) {
  const Real p = Real(1) / (Real(1) + std::exp(-u));
  return p * softplus(-u) + (Real(1) - p) * softplus(u);
}

template <class Real>
Real binary_entropy(Real p) {
  if (p <= Real(0) || p >= Real(1)) return Real(0);
  return -p * std::log(p) - (Real(1) - p) * std::log1p(-p);
}

}  // namespace detail

struct EntropyParams {
  double tau = 1.0;
  double gamma = 1.0;
};

// Factorized-Bernoulli entropy penalty over the tokens of one latent grid.
// With p_i = sigmoid(2 z_i / tau):
//   loss = mean_tokens sum_i H(p_i) - gamma * sum_i H(mean_tokens p_i)
// The first term rewards confident bits, the second rewards even bit usage.
template <class Real>
Tensor<Real> entropy_penalty(const Tensor<Real>& z, std::size_t quant_dim, EntropyParams prm = {}) {
  check_quant_dim(quant_dim);
  if (prm.tau <= 0) throw UsageError("entropy_penalty: tau must be > 0");
  if (z.rank() == 0 || z.shape().back() != quant_dim) throw ShapeError("entropy_penalty: channel mismatch");
  const std::size_t n = z.size() / quant_dim;
  const Real scale = Real(2.0 / prm.tau);
  const Real gamma = Real(prm.gamma);
  std::vector<Real> p(z.size());
  std::vector<Real> pbar(quant_dim, Real(0));
  Real per_token = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < quant_dim; ++i) {
      const Real u = scale * z[t * quant_dim + i];
      p[t * quant_dim + i] = Real(1) / (Real(1) + std::exp(-u));
      pbar[i] += p[t * quant_dim + i];
      per_token += detail::entropy_of_logit(u);
    }
  }
  per_token /= static_cast<Real>(n);
  Real usage = 0;
  for (auto& pb : pbar) {
    pb /= static_cast<Real>(n);
    usage += detail::binary_entropy(pb);
  }
  const Real loss = per_token - gamma * usage;
  return make_op<Real>("entropy_penalty", {}, {loss}, {z},
                       [=, p = std::move(p), pbar = std::move(pbar)](Node<Real>& self) {
    Real* gz = parent_grad(self, 0);
    if (!gz) return;
    const Real g = self.grad[0] / static_cast<Real>(n);
    std::vector<Real> dusage(quant_dim, Real(0));
    for (std::size_t i = 0; i < quant_dim; ++i) {
      if (pbar[i] > Real(0) && pbar[i] < Real(1)) dusage[i] = std::log1p(-pbar[i]) - std::log(pbar[i]);
    }
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < quant_dim; ++i) {
        const std::size_t k = t * quant_dim + i;
        const Real u = scale * (*self.parents[0]->data)[k];
        const Real dp = p[k] * (Real(1) - p[k]) * scale;
        if (dp == Real(0)) continue;
        // dH(sigmoid(u))/du = -u * p (1 - p)
        gz[k] += g * dp * (-u - gamma * dusage[i]);
      }
    }
  });
}

}  // namespace hitok::lfq
