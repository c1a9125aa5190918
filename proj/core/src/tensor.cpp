#include "scoreprop/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "scoreprop/errors.hpp"

namespace scoreprop {

std::int64_t numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
  if (shape.size() > 4) throw ShapeError("tensor rank exceeds 4: " + shape_str(shape));
  for (std::int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive tensor extent in " + shape_str(shape));
  }
  data.assign(static_cast<std::size_t>(numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.size() > 4) throw ShapeError("tensor rank exceeds 4: " + shape_str(shape));
  for (std::int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive tensor extent in " + shape_str(shape));
  }
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::full(std::vector<std::int64_t> s, float value) {
  Tensor t(std::move(s));
  for (float& v : t.data) v = value;
  return t;
}

double tensor_sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data) acc += v;
  return acc;
}

double Map2D::sum() const {
  double acc = 0.0;
  for (double v : data) acc += v;
  return acc;
}

Map2D to_map2d(const Tensor& t) {
  if (t.rank() == 2) {
    Map2D m(t.shape[0], t.shape[1]);
    for (std::int64_t i = 0; i < t.size(); ++i) m.data[static_cast<std::size_t>(i)] = t.data[static_cast<std::size_t>(i)];
    return m;
  }
  if (t.rank() == 3) {
    Map2D m(t.shape[1], t.shape[2]);
    const std::int64_t plane = t.shape[1] * t.shape[2];
    for (std::int64_t c = 0; c < t.shape[0]; ++c) {
      for (std::int64_t i = 0; i < plane; ++i) {
        m.data[static_cast<std::size_t>(i)] += t.data[static_cast<std::size_t>(c * plane + i)];
      }
    }
    return m;
  }
  throw ShapeError("to_map2d expects rank 2 or 3, got " + shape_str(t.shape));
}

Tensor map_to_tensor(const Map2D& m) {
  Tensor t({1, m.h, m.w});
  for (std::int64_t i = 0; i < m.size(); ++i) {
    t.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data[static_cast<std::size_t>(i)]);
  }
  return t;
}

}  // namespace scoreprop
