#pragma once

// Redundancy masking of quantized latents. Positions whose codes change less
// than average from the previous frame are masked and later substituted.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "hitok/config.hpp"
#include "hitok/rng.hpp"
#include "hitok/tensor.hpp"

namespace hitok {

struct MaskPlan {
  Dims3 shape;
  std::vector<std::uint8_t> mask;  // one flag per position, raster order
  MaskStrategy strategy = MaskStrategy::kRepeatPrev;
  double cap = 0.85;

  std::size_t masked_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
  // Positions outside frame 0.
  std::size_t maskable_count() const { return shape.t > 0 ? (shape.t - 1) * shape.h * shape.w : 0; }
  double masked_fraction() const {
    const std::size_t n = maskable_count();
    return n ? static_cast<double>(masked_count()) / static_cast<double>(n) : 0.0;
  }
  bool empty() const { return masked_count() == 0; }
};

inline MaskPlan empty_plan(const Dims3& shape, MaskStrategy s = MaskStrategy::kRepeatPrev) {
  return {shape, std::vector<std::uint8_t>(shape.count(), 0), s, 0.85};
}

// Normalized Hamming distance between the codes at (t,h,w) and (t-1,h,w) for
// t >= 1, in raster order over frames 1..T-1.
inline std::vector<double> diff_matrix(const std::vector<std::uint32_t>& indices, const Dims3& shape, std::size_t quant_dim) {
  if (indices.size() != shape.count()) throw ShapeError("diff_matrix: index count does not match shape");
  lfq::check_quant_dim(quant_dim);
  const std::size_t plane = shape.h * shape.w;
  std::vector<double> out(shape.t > 0 ? (shape.t - 1) * plane : 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto bits = std::popcount(indices[i + plane] ^ indices[i]);
    out[i] = static_cast<double>(bits) / static_cast<double>(quant_dim);
  }
  return out;
}

// Masks positions with score strictly below the mean score. When more than
// floor(cap * maskable) positions qualify, that many are kept by uniform
// sampling without replacement.
inline MaskPlan build_mask(const std::vector<double>& scores, const Dims3& shape, double cap, Rng& rng,
                           MaskStrategy strategy = MaskStrategy::kRepeatPrev) {
  if (!(cap > 0.0 && cap <= 1.0)) throw UsageError("build_mask: cap must be in (0, 1]");
  MaskPlan plan = empty_plan(shape, strategy);
  plan.cap = cap;
  const std::size_t plane = shape.h * shape.w;
  if (scores.size() != plan.maskable_count()) throw ShapeError("build_mask: score count does not match shape");
  if (scores.empty()) return plan;
  double mean = 0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < mean) cand.push_back(i);
  }
  const auto limit = static_cast<std::size_t>(std::floor(cap * static_cast<double>(scores.size()) + 1e-9));
  if (cand.size() > limit) {
    rng.shuffle(cand);
    cand.resize(limit);
  }
  for (std::size_t i : cand) plan.mask[plane + i] = 1;
  return plan;
}

// diff_matrix followed by build_mask on one layer's code indices.
inline MaskPlan plan_from_indices(const std::vector<std::uint32_t>& indices, const Dims3& shape, std::size_t quant_dim,
                                  double cap, Rng& rng, MaskStrategy strategy = MaskStrategy::kRepeatPrev) {
  return build_mask(diff_matrix(indices, shape, quant_dim), shape, cap, rng, strategy);
}

// Replaces masked vectors of a [T,H,W,D] grid. repeat_prev copies the vector
// at (t-1,h,w) after its own substitution; zero writes zeros; learned writes
// `learned` [D]. Differentiable in both the grid and the learned vector.
template <class Real>
Tensor<Real> apply_mask(const Tensor<Real>& grid, const MaskPlan& plan, const Tensor<Real>* learned = nullptr) {
  if (grid.rank() != 4) throw ShapeError("apply_mask: expected [T,H,W,D]");
  const Dims3 shape{grid.dim(0), grid.dim(1), grid.dim(2)};
  if (!(shape == plan.shape) || plan.mask.size() != shape.count()) throw ShapeError("apply_mask: plan does not match grid");
  const std::size_t d = grid.dim(3), plane = shape.h * shape.w;
  const bool wants_learned = plan.strategy == MaskStrategy::kLearned;
  if (wants_learned != (learned != nullptr)) {
    throw UsageError("apply_mask: a learned vector is required exactly when the strategy is 'learned'");
  }
  if (learned && learned->size() != d) throw ShapeError("apply_mask: learned vector size mismatch");
  if (plan.empty()) return grid;
  if (plan.strategy == MaskStrategy::kNone) throw UsageError("apply_mask: masked positions need a strategy");
  for (std::size_t p = 0; p < plane; ++p) {
    if (plan.mask[p]) throw UsageError("apply_mask: frame 0 cannot be masked");
  }

  // Source of every position: itself, another position, or -1 for zero /
  // -2 for the learned vector.
  constexpr std::ptrdiff_t kZeroSrc = -1, kLearnedSrc = -2;
  std::vector<std::ptrdiff_t> src(shape.count());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!plan.mask[i]) {
      src[i] = static_cast<std::ptrdiff_t>(i);
    } else if (plan.strategy == MaskStrategy::kRepeatPrev) {
      src[i] = src[i - plane];
    } else {
      src[i] = plan.strategy == MaskStrategy::kZero ? kZeroSrc : kLearnedSrc;
    }
  }
  std::vector<Real> out(grid.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      out[i * d + k] = src[i] >= 0 ? grid[static_cast<std::size_t>(src[i]) * d + k]
                       : src[i] == kLearnedSrc ? (*learned)[k]
                                               : Real(0);
    }
  }
  std::vector<Tensor<Real>> parents{grid};
  if (learned) parents.push_back(*learned);
  return make_op<Real>("apply_mask", grid.shape(), std::move(out), std::move(parents),
                       [src = std::move(src), d](Node<Real>& self) {
    Real* gg = parent_grad(self, 0);
    Real* gl = self.parents.size() > 1 ? parent_grad(self, 1) : nullptr;
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const Real g = self.grad[i * d + k];
        if (src[i] >= 0) {
          if (gg) gg[static_cast<std::size_t>(src[i]) * d + k] += g;
        } else if (src[i] == kLearnedSrc && gl) {
          gl[k] += g;
        }
      }
    }
  });
}

}  // namespace hitok
