#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sacc/tensor/tensor.hpp"

/// Differentiable tensor operations. Every function records itself on the
/// current GradientTape when one of its inputs requires a gradient.
namespace sacc::ops {

/// [m×k] · [k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// x [N×in] · wᵀ [in×out] + bias [out] -> [N×out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of x [N×C×H×W] with w [F×C×kh×kw], optional bias [F].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = {}, Conv2dOptions opt = {});

/// Elementwise max(x, 0); the subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// Non-overlapping k×k max pooling over the last two axes (H, W divisible by k).
Tensor max_pool2d(const Tensor& x, std::size_t k);

/// Nearest-neighbour upsampling of the last two axes by an integer factor.
Tensor upsample_nearest2d(const Tensor& x, std::size_t factor);

/// Exact area-average resampling of x [N×C×H×W] to [N×C×out_h×out_w].
/// Every output cell is the mean of the source area it covers, so constants
/// are preserved. Upsampling is rejected.
Tensor resize_average(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Same values, new shape.
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// out.flat[i] = x.flat[index[i]]. Backward is the scatter-add of out.grad.
/// Covers table lookups and any pixel permutation (rotations, tile shuffles).
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);

/// Mean over the batch of -log softmax(logits)[label]; logits [N×K].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels);

/// Row-wise softmax of [N×K] logits (not recorded).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace sacc::ops
