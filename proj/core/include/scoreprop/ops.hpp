#pragma once

#include <utility>
#include <vector>

#include "scoreprop/tensor.hpp"

namespace scoreprop {

/// Height/width pair for kernels, strides and padding.
struct HW {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

/// Spatial output extent: floor((in + 2*pad - k) / stride) + 1.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                             std::int64_t pad);

/// 2D convolution over a CHW input with [out,in,kh,kw] weights and zero
/// padding. Window products are accumulated in double in row-major order
/// (in-channel, then kernel row, then kernel column), then bias is added.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<float>& bias, HW stride, HW pad);

/// Max pooling. The index map records, per output position, the flat index
/// of the selected input; ties break to the lowest flat index.
std::pair<Tensor, PoolIndexMap> maxpool2d_forward(const Tensor& input, HW k, HW stride);

/// Average pooling; window sums accumulate in double.
Tensor avgpool2d_forward(const Tensor& input, HW k, HW stride);

/// Per-channel affine normalization: beta + gamma * (x - mean) / sigma with
/// sigma = sqrt(var + eps).
Tensor batchnorm_forward(const Tensor& input, const std::vector<float>& gamma,
                         const std::vector<float>& beta, const std::vector<float>& mean,
                         const std::vector<float>& var, float eps);

Tensor relu_forward(const Tensor& input);

/// out[c] = sum_j w[c,j] * a[j] + b[c], double accumulation.
Tensor linear_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<float>& bias);

/// Numerically stable softmax (max subtraction, double arithmetic).
/// Output is positive, sums to 1 within 1e-12, and preserves argmax.
std::vector<double> softmax(const std::vector<float>& scores);

std::size_t argmax(const std::vector<float>& v);
std::size_t argmax(const std::vector<double>& v);

}  // namespace scoreprop
