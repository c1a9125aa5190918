#include "scoreprop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scoreprop/errors.hpp"

namespace scoreprop {

namespace {

struct Chw {
  std::int64_t c, h, w;
};

// Accepts rank-3 (C,H,W) or rank-4 with a leading batch extent of 1.
Chw as_chw(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {t.shape[0], t.shape[1], t.shape[2]};
  if (t.rank() == 4 && t.shape[0] == 1) return {t.shape[1], t.shape[2], t.shape[3]};
  throw ShapeError(std::string(what) + ": expected CHW tensor, got " + shape_str(t.shape));
}

void check_pool_geometry(const Chw& in, HW k, HW stride, const char* what) {
  if (k.h <= 0 || k.w <= 0 || stride.h <= 0 || stride.w <= 0) {
    throw ShapeError(std::string(what) + ": window and stride must be positive");
  }
  if (k.h > in.h || k.w > in.w) {
    throw ShapeError(std::string(what) + ": window " + std::to_string(k.h) + "x" +
                     std::to_string(k.w) + " larger than input " + std::to_string(in.h) + "x" +
                     std::to_string(in.w));
  }
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                             std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<float>& bias, HW stride, HW pad) {
  const Chw in = as_chw(input, "conv2d");
  if (weights.rank() != 4) {
    throw ShapeError("conv2d: weights must be rank 4 [out,in,kh,kw], got " +
                     shape_str(weights.shape));
  }
  const std::int64_t c_out = weights.shape[0];
  const std::int64_t c_in = weights.shape[1];
  const std::int64_t kh = weights.shape[2];
  const std::int64_t kw = weights.shape[3];
  if (c_in != in.c) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c) +
                     " channels but weights expect " + std::to_string(c_in));
  }
  if (static_cast<std::int64_t>(bias.size()) != c_out) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                     " does not match " + std::to_string(c_out) + " output channels");
  }
  if (stride.h <= 0 || stride.w <= 0 || pad.h < 0 || pad.w < 0) {
    throw ShapeError("conv2d: stride must be positive and padding non-negative");
  }
  if (in.h + 2 * pad.h < kh || in.w + 2 * pad.w < kw) {
    throw ShapeError("conv2d: padded extent " + std::to_string(in.h + 2 * pad.h) + "x" +
                     std::to_string(in.w + 2 * pad.w) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  }

  const std::int64_t oh = conv_out_extent(in.h, kh, stride.h, pad.h);
  const std::int64_t ow = conv_out_extent(in.w, kw, stride.w, pad.w);
  Tensor out({c_out, oh, ow});

  const float* x = input.data.data();
  const float* w = weights.data.data();
  for (std::int64_t co = 0; co < c_out; ++co) {
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      const std::int64_t y0 = yo * stride.h - pad.h;
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        const std::int64_t x0 = xo * stride.w - pad.w;
        double acc = 0.0;
        for (std::int64_t ci = 0; ci < c_in; ++ci) {
          const std::int64_t wbase = ((co * c_in + ci) * kh) * kw;
          const std::int64_t xbase = ci * in.h * in.w;
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t yi = y0 + ky;
            if (yi < 0 || yi >= in.h) continue;
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t xi = x0 + kx;
              if (xi < 0 || xi >= in.w) continue;
              acc += static_cast<double>(x[xbase + yi * in.w + xi]) *
                     static_cast<double>(w[wbase + ky * kw + kx]);
            }
          }
        }
        acc += static_cast<double>(bias[static_cast<std::size_t>(co)]);
        out.at3(co, yo, xo) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

std::pair<Tensor, PoolIndexMap> maxpool2d_forward(const Tensor& input, HW k, HW stride) {
  const Chw in = as_chw(input, "maxpool2d");
  check_pool_geometry(in, k, stride, "maxpool2d");

  const std::int64_t oh = conv_out_extent(in.h, k.h, stride.h, 0);
  const std::int64_t ow = conv_out_extent(in.w, k.w, stride.w, 0);
  Tensor out({in.c, oh, ow});
  PoolIndexMap map;
  map.shape = {in.c, oh, ow};
  map.index.resize(static_cast<std::size_t>(in.c * oh * ow));

  const float* x = input.data.data();
  std::size_t o = 0;
  for (std::int64_t c = 0; c < in.c; ++c) {
    const std::int64_t cbase = c * in.h * in.w;
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        float best = -std::numeric_limits<float>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t ky = 0; ky < k.h; ++ky) {
          const std::int64_t yi = yo * stride.h + ky;
          for (std::int64_t kx = 0; kx < k.w; ++kx) {
            const std::int64_t xi = xo * stride.w + kx;
            const std::int64_t idx = cbase + yi * in.w + xi;
            const float v = x[idx];
            if (v > best) {  // strict: ties keep the lowest flat index
              best = v;
              best_idx = idx;
            }
          }
        }
        out.data[o] = best;
        map.index[o] = best_idx;
        ++o;
      }
    }
  }
  return {std::move(out), std::move(map)};
}

Tensor avgpool2d_forward(const Tensor& input, HW k, HW stride) {
  const Chw in = as_chw(input, "avgpool2d");
  check_pool_geometry(in, k, stride, "avgpool2d");

  const std::int64_t oh = conv_out_extent(in.h, k.h, stride.h, 0);
  const std::int64_t ow = conv_out_extent(in.w, k.w, stride.w, 0);
  Tensor out({in.c, oh, ow});
  const double inv_n = 1.0 / static_cast<double>(k.h * k.w);

  const float* x = input.data.data();
  std::size_t o = 0;
  for (std::int64_t c = 0; c < in.c; ++c) {
    const std::int64_t cbase = c * in.h * in.w;
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (std::int64_t ky = 0; ky < k.h; ++ky) {
          const std::int64_t yi = yo * stride.h + ky;
          for (std::int64_t kx = 0; kx < k.w; ++kx) {
            acc += static_cast<double>(x[cbase + yi * in.w + xo * stride.w + kx]);
          }
        }
        out.data[o++] = static_cast<float>(acc * inv_n);
      }
    }
  }
  return out;
}

Tensor batchnorm_forward(const Tensor& input, const std::vector<float>& gamma,
                         const std::vector<float>& beta, const std::vector<float>& mean,
                         const std::vector<float>& var, float eps) {
  const Chw in = as_chw(input, "batchnorm");
  const auto c = static_cast<std::size_t>(in.c);
  if (gamma.size() != c || beta.size() != c || mean.size() != c || var.size() != c) {
    throw ShapeError("batchnorm: parameter vectors must have " + std::to_string(in.c) +
                     " channels");
  }
  for (float v : var) {
    if (v < 0.0f) throw std::invalid_argument("batchnorm: negative variance");
  }

  Tensor out(input.shape, input.data);
  const std::int64_t plane = in.h * in.w;
  for (std::int64_t ch = 0; ch < in.c; ++ch) {
    const auto i = static_cast<std::size_t>(ch);
    const double sigma = std::sqrt(static_cast<double>(var[i]) + static_cast<double>(eps));
    const double g = gamma[i];
    const double b = beta[i];
    const double m = mean[i];
    float* p = out.data.data() + ch * plane;
    for (std::int64_t j = 0; j < plane; ++j) {
      p[j] = static_cast<float>(b + g * ((static_cast<double>(p[j]) - m) / sigma));
    }
  }
  return out;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape, input.data);
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor linear_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<float>& bias) {
  if (weights.rank() != 2) {
    throw ShapeError("linear: weights must be rank 2 [out,in], got " + shape_str(weights.shape));
  }
  const std::int64_t n_out = weights.shape[0];
  const std::int64_t n_in = weights.shape[1];
  if (input.size() != n_in) {
    throw ShapeError("linear: input length " + std::to_string(input.size()) +
                     " does not match weight columns " + std::to_string(n_in));
  }
  if (static_cast<std::int64_t>(bias.size()) != n_out) {
    throw ShapeError("linear: bias length " + std::to_string(bias.size()) +
                     " does not match " + std::to_string(n_out) + " outputs");
  }

  Tensor out({n_out});
  const float* a = input.data.data();
  const float* w = weights.data.data();
  for (std::int64_t c = 0; c < n_out; ++c) {
    double acc = 0.0;
    const float* row = w + c * n_in;
    for (std::int64_t j = 0; j < n_in; ++j) {
      acc += static_cast<double>(row[j]) * static_cast<double>(a[j]);
    }
    acc += static_cast<double>(bias[static_cast<std::size_t>(c)]);
    out.at1(c) = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> softmax(const std::vector<float>& scores) {
  std::vector<double> out(scores.size(), 0.0);
  if (scores.empty()) return out;
  double top = scores[0];
  for (float v : scores) top = std::max(top, static_cast<double>(v));
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(static_cast<double>(scores[i]) - top);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

std::size_t argmax(const std::vector<float>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace scoreprop
