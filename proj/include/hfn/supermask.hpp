#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hfn/common.hpp"
#include "hfn/ops.hpp"
#include "hfn/tensor.hpp"

namespace hfn {

// Binary supermask over a layer's frozen weights; bits follow the flat
// row-major element order of the weight tensor.
using MaskBits = std::vector<uint8_t>;

inline int64_t topk_count(int64_t n, int k_permille) {
  return (n * static_cast<int64_t>(k_permille)) / 1000;
}

// Selects the floor(k/1000 * n) largest scores. Ties break toward the lower
// flat index so the mask is a deterministic function of the score tensor.
template <typename T>
MaskBits topk_mask(const Tensor<T>& scores, int k_permille) {
  if (k_permille <= 0 || k_permille > 1000) {
    throw ConfigError("topk_mask: k_permille must be in (0,1000], got " + std::to_string(k_permille));
  }
  const int64_t n = scores.numel();
  const int64_t m = topk_count(n, k_permille);
  if (m == 0) {
    throw ConfigError("topk_mask: top-k selects zero of " + std::to_string(n) +
                      " weights (degenerate layer)");
  }
  MaskBits mask(static_cast<size_t>(n), 0);
  if (m == n) {
    std::fill(mask.begin(), mask.end(), uint8_t(1));
    return mask;
  }
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), int64_t(0));
  const T* s = scores.ptr();
  auto better = [s](int64_t a, int64_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + m, idx.end(), better);
  for (int64_t i = 0; i < m; ++i) mask[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  return mask;
}

inline int64_t mask_popcount(const MaskBits& mask) {
  int64_t ones = 0;
  for (uint8_t b : mask) ones += b;
  return ones;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& weights, const MaskBits& mask) {
  if (static_cast<int64_t>(mask.size()) != weights.numel()) {
    throw std::invalid_argument("apply_mask: mask length does not match weight count");
  }
  Tensor<T> eff(weights.shape);
  for (int64_t i = 0; i < weights.numel(); ++i) eff[i] = mask[static_cast<size_t>(i)] ? weights[i] : T(0);
  return eff;
}

// Straight-through score gradient: d loss / d score = d loss / d (mask*w) * w,
// evaluated with the mask held at its binary value. Every position receives a
// gradient, selected or not.
template <typename T>
Tensor<T> ste_score_grad(const Tensor<T>& grad_effective, const Tensor<T>& weights) {
  if (!grad_effective.same_shape(weights)) {
    throw std::invalid_argument("ste_score_grad: shape mismatch");
  }
  Tensor<T> g(weights.shape);
  for (int64_t i = 0; i < weights.numel(); ++i) {
    g[i] = static_cast<T>(static_cast<double>(grad_effective[i]) * static_cast<double>(weights[i]));
  }
  return g;
}

// Masked convolution: identical to conv2d with elementwise-masked weights.
template <typename T>
Tensor<T> masked_conv2d(const Tensor<T>& input, const Tensor<T>& weights, const MaskBits& mask,
                        int stride, int pad) {
  return conv2d(input, apply_mask(weights, mask), stride, pad);
}

template <typename T>
Tensor<T> masked_conv2d_score_grad(const Tensor<T>& upstream, const Tensor<T>& input,
                                   const Tensor<T>& weights, const MaskBits& mask, int stride,
                                   int pad) {
  auto grads = conv2d_grad(upstream, input, apply_mask(weights, mask), stride, pad);
  return ste_score_grad(grads.grad_weights, weights);
}

}  // namespace hfn
