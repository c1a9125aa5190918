#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scoreprop {

/// Dense rank-<=4 float32 array in row-major order. Activations use
/// channel/height/width layout; a leading batch extent of 1 is accepted
/// by the forward primitives and treated as a plain CHW tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s);
  Tensor(std::vector<std::int64_t> s, std::vector<float> d);

  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  // Rank-specific element access, no bounds checks beyond the flat index.
  float& at1(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  float at1(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  float& at2(std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>(y * shape[1] + x)];
  }
  float at2(std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>(y * shape[1] + x)];
  }
  float& at3(std::int64_t c, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
  }
  float at3(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::int64_t> s, float value);
};

std::int64_t numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

/// Sum of all elements, accumulated in double in storage order.
double tensor_sum(const Tensor& t);

/// H x W map of doubles; accumulation target for input-space score maps.
struct Map2D {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<double> data;

  Map2D() = default;
  Map2D(std::int64_t h_, std::int64_t w_)
      : h(h_), w(w_), data(static_cast<std::size_t>(h_ * w_), 0.0) {}

  double& at(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(y * w + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(y * w + x)]; }
  std::int64_t size() const { return h * w; }
  double sum() const;
};

/// Collapse a rank-2 or rank-3 (channel-summed) tensor into a Map2D.
Map2D to_map2d(const Tensor& t);

/// Convert a Map2D to a 1 x H x W float tensor (for serialization).
Tensor map_to_tensor(const Map2D& m);

/// Per-output-position flat index (into the input tensor) of the input
/// selected by a max-pool window during the forward pass.
struct PoolIndexMap {
  std::vector<std::int64_t> shape;  // output shape (C, h, w)
  std::vector<std::int64_t> index;  // flat indices into the pool input
};

}  // namespace scoreprop
