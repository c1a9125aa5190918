#include "scoreprop/score.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "scoreprop/errors.hpp"
#include "scoreprop/ops.hpp"

namespace scoreprop::score {

namespace {

// Propagation runs on double buffers; tensors are converted at the API
// boundary. The tape's float32 activations are the only rounding source
// inside a propagation step.

std::vector<double> to_double(const Tensor& t) {
  return std::vector<double>(t.data.begin(), t.data.end());
}

Tensor to_tensor(const std::vector<std::int64_t>& shape, const std::vector<double>& d) {
  Tensor t(shape);
  for (std::size_t i = 0; i < d.size(); ++i) t.data[i] = static_cast<float>(d[i]);
  return t;
}

struct Chw {
  std::int64_t c, h, w;
};

Chw as_chw(const std::vector<std::int64_t>& shape, const char* what) {
  if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
  if (shape.size() == 4 && shape[0] == 1) return {shape[1], shape[2], shape[3]};
  throw ShapeError(std::string(what) + ": expected CHW tensor, got " + shape_str(shape));
}

struct DScores {
  std::vector<double> lambda_in;
  std::vector<double> constant;  // sized like lambda_out, or empty
  double residual = 0.0;
};

DScores linear_core(const std::vector<double>& lam, const Tensor& w,
                    const std::vector<float>& b, std::int64_t n_in) {
  const std::int64_t n_out = w.shape[0];
  if (static_cast<std::int64_t>(lam.size()) != n_out) {
    throw ShapeError("score_linear: multiplier length " + std::to_string(lam.size()) +
                     " does not match " + std::to_string(n_out) + " outputs");
  }
  if (w.shape[1] != n_in) {
    throw ShapeError("score_linear: input length " + std::to_string(n_in) +
                     " does not match weight columns " + std::to_string(w.shape[1]));
  }
  DScores r;
  r.lambda_in.assign(static_cast<std::size_t>(n_in), 0.0);
  r.constant.assign(static_cast<std::size_t>(n_out), 0.0);
  const float* wd = w.data.data();
  for (std::int64_t c = 0; c < n_out; ++c) {
    const double lc = lam[static_cast<std::size_t>(c)];
    r.constant[static_cast<std::size_t>(c)] = lc * static_cast<double>(b[static_cast<std::size_t>(c)]);
    if (lc == 0.0) continue;
    const float* row = wd + c * n_in;
    for (std::int64_t j = 0; j < n_in; ++j) {
      r.lambda_in[static_cast<std::size_t>(j)] += lc * static_cast<double>(row[j]);
    }
  }
  return r;
}

DScores conv_core(const std::vector<double>& lam, const std::vector<std::int64_t>& out_shape,
                  const Tensor& w, const std::vector<float>& b,
                  const std::vector<std::int64_t>& in_shape, HW stride, HW pad) {
  const Chw in = as_chw(in_shape, "score_conv");
  const Chw out = as_chw(out_shape, "score_conv");
  const std::int64_t c_out = w.shape[0];
  const std::int64_t c_in = w.shape[1];
  const std::int64_t kh = w.shape[2];
  const std::int64_t kw = w.shape[3];
  if (out.c != c_out || in.c != c_in) {
    throw ShapeError("score_conv: weight channels " + shape_str(w.shape) +
                     " do not match activations " + shape_str(in_shape) + " -> " +
                     shape_str(out_shape));
  }
  if (conv_out_extent(in.h, kh, stride.h, pad.h) != out.h ||
      conv_out_extent(in.w, kw, stride.w, pad.w) != out.w) {
    throw ShapeError("score_conv: output extent does not match forward geometry");
  }

  DScores r;
  r.lambda_in.assign(static_cast<std::size_t>(in.c * in.h * in.w), 0.0);
  r.constant.assign(lam.size(), 0.0);
  const float* wd = w.data.data();
  std::size_t o = 0;
  for (std::int64_t co = 0; co < c_out; ++co) {
    const double bias_c = b[static_cast<std::size_t>(co)];
    for (std::int64_t yo = 0; yo < out.h; ++yo) {
      const std::int64_t y0 = yo * stride.h - pad.h;
      for (std::int64_t xo = 0; xo < out.w; ++xo, ++o) {
        const double lo = lam[o];
        r.constant[o] = lo * bias_c;
        if (lo == 0.0) continue;
        const std::int64_t x0 = xo * stride.w - pad.w;
        for (std::int64_t ci = 0; ci < c_in; ++ci) {
          const std::int64_t wbase = ((co * c_in + ci) * kh) * kw;
          const std::int64_t xbase = ci * in.h * in.w;
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t yi = y0 + ky;
            if (yi < 0 || yi >= in.h) continue;  // padding share is discarded
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t xi = x0 + kx;
              if (xi < 0 || xi >= in.w) continue;
              r.lambda_in[static_cast<std::size_t>(xbase + yi * in.w + xi)] +=
                  lo * static_cast<double>(wd[wbase + ky * kw + kx]);
            }
          }
        }
      }
    }
  }
  return r;
}

DScores batchnorm_core(const std::vector<double>& lam, const std::vector<std::int64_t>& shape,
                       const std::vector<float>& gamma, const std::vector<float>& beta,
                       const std::vector<float>& mean, const std::vector<float>& var,
                       float eps) {
  const Chw s = as_chw(shape, "score_batchnorm");
  if (gamma.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("score_batchnorm: parameter vectors must have " + std::to_string(s.c) +
                     " channels");
  }
  DScores r;
  r.lambda_in.assign(lam.size(), 0.0);
  r.constant.assign(lam.size(), 0.0);
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double sigma = std::sqrt(static_cast<double>(var[ci]) + static_cast<double>(eps));
    const double scale = static_cast<double>(gamma[ci]) / sigma;
    const double offset = static_cast<double>(beta[ci]) -
                          static_cast<double>(gamma[ci]) * static_cast<double>(mean[ci]) / sigma;
    for (std::int64_t j = 0; j < plane; ++j) {
      const auto i = static_cast<std::size_t>(c * plane + j);
      r.lambda_in[i] = lam[i] * scale;
      r.constant[i] = lam[i] * offset;
    }
  }
  return r;
}

DScores relu_core(const std::vector<double>& lam, const Tensor& a_in) {
  DScores r;
  r.lambda_in.assign(lam.size(), 0.0);
  for (std::size_t i = 0; i < lam.size(); ++i) {
    // a == 0 counts as inactive, so the boundary stays deterministic.
    if (a_in.data[i] > 0.0f) r.lambda_in[i] = lam[i];
  }
  return r;
}

DScores maxpool_core(const std::vector<double>& lam, const std::vector<std::int64_t>& out_shape,
                     const PoolIndexMap& indices, const std::vector<std::int64_t>& in_shape,
                     HW k, HW stride) {
  const Chw in = as_chw(in_shape, "score_maxpool");
  const Chw out = as_chw(out_shape, "score_maxpool");
  if (indices.shape != std::vector<std::int64_t>{out.c, out.h, out.w} ||
      indices.index.size() != lam.size()) {
    throw ShapeError("score_maxpool: index map shape does not match the output");
  }
  DScores r;
  r.lambda_in.assign(static_cast<std::size_t>(in.c * in.h * in.w), 0.0);
  std::size_t o = 0;
  for (std::int64_t c = 0; c < out.c; ++c) {
    for (std::int64_t yo = 0; yo < out.h; ++yo) {
      for (std::int64_t xo = 0; xo < out.w; ++xo, ++o) {
        const std::int64_t idx = indices.index[o];
        // Reject indices outside this output's pooling window (stale map).
        const std::int64_t ci = idx / (in.h * in.w);
        const std::int64_t rem = idx % (in.h * in.w);
        const std::int64_t yi = rem / in.w;
        const std::int64_t xi = rem % in.w;
        const bool in_window = ci == c && yi >= yo * stride.h && yi < yo * stride.h + k.h &&
                               xi >= xo * stride.w && xi < xo * stride.w + k.w;
        if (idx < 0 || idx >= static_cast<std::int64_t>(r.lambda_in.size()) || !in_window) {
          throw std::invalid_argument("score_maxpool: index map entry " + std::to_string(idx) +
                                      " lies outside its pooling window (stale index map?)");
        }
        r.lambda_in[static_cast<std::size_t>(idx)] += lam[o];
      }
    }
  }
  return r;
}

DScores avgpool_core(const std::vector<double>& lam, const std::vector<std::int64_t>& out_shape,
                     const Tensor& a_in, const Tensor& a_out, HW k, HW stride,
                     AvgPoolMode mode) {
  const Chw in = as_chw(a_in.shape, "score_avgpool");
  const Chw out = as_chw(out_shape, "score_avgpool");
  if (out.c != in.c || conv_out_extent(in.h, k.h, stride.h, 0) != out.h ||
      conv_out_extent(in.w, k.w, stride.w, 0) != out.w) {
    throw ShapeError("score_avgpool: geometry does not match the forward pass");
  }
  const double inv_n = 1.0 / static_cast<double>(k.h * k.w);

  DScores r;
  r.lambda_in.assign(a_in.data.size(), 0.0);

  if (mode == AvgPoolMode::Linear) {
    std::size_t o = 0;
    for (std::int64_t c = 0; c < out.c; ++c) {
      const std::int64_t cbase = c * in.h * in.w;
      for (std::int64_t yo = 0; yo < out.h; ++yo) {
        for (std::int64_t xo = 0; xo < out.w; ++xo, ++o) {
          const double share = lam[o] * inv_n;
          if (share == 0.0) continue;
          for (std::int64_t ky = 0; ky < k.h; ++ky) {
            const std::int64_t yi = yo * stride.h + ky;
            for (std::int64_t kx = 0; kx < k.w; ++kx) {
              const std::int64_t xi = xo * stride.w + kx;
              r.lambda_in[static_cast<std::size_t>(cbase + yi * in.w + xi)] += share;
            }
          }
        }
      }
    }
    return r;
  }

  // Equal split: every input of the window receives S_out / N. The
  // share of a zero activation has no consistent multiplier, so it moves
  // to the layer residual.
  std::vector<double> s_in(a_in.data.size(), 0.0);
  std::size_t o = 0;
  for (std::int64_t c = 0; c < out.c; ++c) {
    const std::int64_t cbase = c * in.h * in.w;
    for (std::int64_t yo = 0; yo < out.h; ++yo) {
      for (std::int64_t xo = 0; xo < out.w; ++xo, ++o) {
        const double s_out = lam[o] * static_cast<double>(a_out.data[o]);
        const double share = s_out * inv_n;
        if (share == 0.0) continue;
        for (std::int64_t ky = 0; ky < k.h; ++ky) {
          const std::int64_t yi = yo * stride.h + ky;
          for (std::int64_t kx = 0; kx < k.w; ++kx) {
            const std::int64_t xi = xo * stride.w + kx;
            s_in[static_cast<std::size_t>(cbase + yi * in.w + xi)] += share;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < s_in.size(); ++i) {
    const float a = a_in.data[i];
    if (a != 0.0f) {
      r.lambda_in[i] = s_in[i] / static_cast<double>(a);
    } else {
      r.residual += s_in[i];
    }
  }
  return r;
}

std::vector<double> dropout_core(const std::vector<double>& lam, float d) {
  if (!(d >= 0.0f && d < 1.0f)) {
    throw std::invalid_argument("score_dropout: probability must be in [0,1)");
  }
  const double keep = static_cast<double>(1.0f - d);
  std::vector<double> out(lam.size());
  for (std::size_t i = 0; i < lam.size(); ++i) out[i] = lam[i] * keep;
  return out;
}

void check_same_size(const Tensor& lambda_out, const Tensor& a, const char* what) {
  if (lambda_out.size() != a.size()) {
    throw ShapeError(std::string(what) + ": multiplier shape " + shape_str(lambda_out.shape) +
                     " does not match activation " + shape_str(a.shape));
  }
}

}  // namespace

Tensor init_class_score(const std::vector<float>& logits, int class_index) {
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= logits.size()) {
    throw std::invalid_argument("init_class_score: class " + std::to_string(class_index) +
                                " out of range for " + std::to_string(logits.size()) +
                                " outputs");
  }
  Tensor seed({static_cast<std::int64_t>(logits.size())});
  seed.at1(class_index) = 1.0f;
  return seed;
}

LayerScores score_linear(const Tensor& lambda_out, const Tensor& weights,
                         const std::vector<float>& bias, const Tensor& a_in) {
  auto r = linear_core(to_double(lambda_out), weights, bias, a_in.size());
  return {to_tensor({a_in.size()}, r.lambda_in), to_tensor(lambda_out.shape, r.constant), 0.0};
}

LayerScores score_conv(const Tensor& lambda_out, const Tensor& weights,
                       const std::vector<float>& bias, const Tensor& a_in, HW stride, HW pad) {
  auto r = conv_core(to_double(lambda_out), lambda_out.shape, weights, bias, a_in.shape, stride,
                     pad);
  return {to_tensor(a_in.shape, r.lambda_in), to_tensor(lambda_out.shape, r.constant), 0.0};
}

LayerScores score_batchnorm(const Tensor& lambda_out, const std::vector<float>& gamma,
                            const std::vector<float>& beta, const std::vector<float>& mean,
                            const std::vector<float>& var, float eps, const Tensor& a_in) {
  check_same_size(lambda_out, a_in, "score_batchnorm");
  auto r = batchnorm_core(to_double(lambda_out), lambda_out.shape, gamma, beta, mean, var, eps);
  return {to_tensor(a_in.shape, r.lambda_in), to_tensor(lambda_out.shape, r.constant), 0.0};
}

LayerScores score_relu(const Tensor& lambda_out, const Tensor& a_in) {
  check_same_size(lambda_out, a_in, "score_relu");
  auto r = relu_core(to_double(lambda_out), a_in);
  return {to_tensor(a_in.shape, r.lambda_in), Tensor{}, 0.0};
}

LayerScores score_activation_taylor(const Tensor& lambda_out, const Tensor& a_in,
                                    const std::function<double(double)>& phi,
                                    const std::function<double(double)>& dphi) {
  check_same_size(lambda_out, a_in, "score_activation_taylor");
  LayerScores r;
  r.lambda_in = Tensor(a_in.shape);
  r.constant = Tensor(lambda_out.shape);
  for (std::size_t i = 0; i < a_in.data.size(); ++i) {
    const double a = a_in.data[i];
    const double p = phi(a);
    const double dp = dphi(a);
    if (!std::isfinite(p) || !std::isfinite(dp)) {
      throw std::invalid_argument("score_activation_taylor: activation not finite at " +
                                  std::to_string(a));
    }
    const double lo = lambda_out.data[i];
    r.lambda_in.data[i] = static_cast<float>(lo * dp);
    r.constant.data[i] = static_cast<float>(lo * (p - dp * a));
  }
  return r;
}

LayerScores score_maxpool(const Tensor& lambda_out, const PoolIndexMap& indices,
                          const Tensor& a_in, HW k, HW stride) {
  auto r = maxpool_core(to_double(lambda_out), lambda_out.shape, indices, a_in.shape, k, stride);
  return {to_tensor(a_in.shape, r.lambda_in), Tensor{}, 0.0};
}

LayerScores score_avgpool(const Tensor& lambda_out, const Tensor& a_in, HW k, HW stride,
                          AvgPoolMode mode) {
  const Tensor a_out = avgpool2d_forward(a_in, k, stride);
  auto r = avgpool_core(to_double(lambda_out), lambda_out.shape, a_in, a_out, k, stride, mode);
  return {to_tensor(a_in.shape, r.lambda_in), Tensor{}, r.residual};
}

LayerScores score_dropout(const Tensor& lambda_out, float d) {
  auto lam = dropout_core(to_double(lambda_out), d);
  return {to_tensor(lambda_out.shape, lam), Tensor{}, 0.0};
}

LayerScores score_fused_block(const Tensor& lambda_out, const Tensor& conv_weights,
                              const std::vector<float>& conv_bias, HW stride, HW pad,
                              const std::vector<float>& gamma, const std::vector<float>& beta,
                              const std::vector<float>& mean, const std::vector<float>& var,
                              float eps, const Tensor& bn_out, const Tensor& a_in) {
  const LayerScores relu = score_relu(lambda_out, bn_out);
  const LayerScores bn = score_batchnorm(relu.lambda_in, gamma, beta, mean, var, eps, bn_out);
  LayerScores conv = score_conv(bn.lambda_in, conv_weights, conv_bias, a_in, stride, pad);

  LayerScores fused;
  fused.lambda_in = std::move(conv.lambda_in);
  fused.constant = Tensor(lambda_out.shape);
  for (std::size_t i = 0; i < fused.constant.data.size(); ++i) {
    fused.constant.data[i] = bn.constant.data[i] + conv.constant.data[i];
  }
  return fused;
}

namespace {

// Channel-summed spatial map of a double buffer over `shape`; vector
// layers collapse to a 1x1 map.
Tensor channel_sum_map(const std::vector<double>& values,
                       const std::vector<std::int64_t>& shape) {
  if (shape.size() == 3 || (shape.size() == 4 && shape[0] == 1)) {
    const Chw s = as_chw(shape, "channel_sum_map");
    const std::int64_t plane = s.h * s.w;
    std::vector<double> acc(static_cast<std::size_t>(plane), 0.0);
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t j = 0; j < plane; ++j) {
        acc[static_cast<std::size_t>(j)] += values[static_cast<std::size_t>(c * plane + j)];
      }
    }
    return to_tensor({s.h, s.w}, acc);
  }
  double total = 0.0;
  for (double v : values) total += v;
  return to_tensor({1, 1}, {total});
}

struct ClassResult {
  ScoreState state;
  ClassExplanation expl;
};

ClassResult explain_one_class(const ModelGraph& model, const ForwardTape& tape, int cls,
                              const ExplainOptions& options) {
  const std::int64_t n_layers = model.layer_count();
  ClassResult out;
  ScoreState& st = out.state;
  ClassExplanation& ce = out.expl;

  st.class_index = cls;
  st.constant_sum.assign(static_cast<std::size_t>(n_layers), 0.0);
  st.residual.assign(static_cast<std::size_t>(n_layers), 0.0);
  if (options.keep_layer_tensors) {
    st.lambda.resize(static_cast<std::size_t>(n_layers));
    st.score.resize(static_cast<std::size_t>(n_layers));
    st.constant.resize(static_cast<std::size_t>(n_layers));
  }
  ce.class_index = cls;
  ce.logit = tape.logits[static_cast<std::size_t>(cls)];
  ce.layer_score_maps.resize(static_cast<std::size_t>(n_layers));
  ce.layer_const_maps.resize(static_cast<std::size_t>(n_layers));
  ce.layer_residuals.assign(static_cast<std::size_t>(n_layers), 0.0);

  // Seed at the network output: 1 at the target class.
  std::vector<double> lam(tape.logits.size(), 0.0);
  lam[static_cast<std::size_t>(cls)] = 1.0;

  std::int64_t last_linear = -1;
  for (std::int64_t l = 0; l < n_layers; ++l) {
    if (model.spec(l).kind == LayerKind::Linear) last_linear = l;
  }

  for (std::int64_t l = n_layers - 1; l >= 0; --l) {
    const LayerSpec& spec = model.spec(l);
    const LayerParams& params = model.params(l);
    const Tensor& a_in = tape.input_of(l);
    const Tensor& a_out = tape.output_of(l);
    const auto li = static_cast<std::size_t>(l);

    // Views of the multiplier and score at this layer's output.
    {
      std::vector<double> s(lam.size());
      for (std::size_t i = 0; i < lam.size(); ++i) {
        s[i] = lam[i] * static_cast<double>(a_out.data[i]);
      }
      ce.layer_score_maps[li] = channel_sum_map(s, a_out.shape);
      if (options.keep_layer_tensors) {
        st.lambda[li] = to_tensor(a_out.shape, lam);
        st.score[li] = to_tensor(a_out.shape, s);
      }
    }

    DScores r;
    switch (spec.kind) {
      case LayerKind::Conv2d:
        r = conv_core(lam, a_out.shape, params.weight, params.bias, a_in.shape, spec.stride,
                      spec.pad);
        break;
      case LayerKind::BatchNorm:
        r = batchnorm_core(lam, a_out.shape, params.gamma, params.beta, params.mean, params.var,
                           spec.eps);
        break;
      case LayerKind::Relu:
        r = relu_core(lam, a_in);
        break;
      case LayerKind::MaxPool:
        r = maxpool_core(lam, a_out.shape, *tape.pool_indices[li], a_in.shape, spec.kernel,
                         spec.stride);
        break;
      case LayerKind::AvgPool:
        r = avgpool_core(lam, a_out.shape, a_in, a_out, spec.kernel, spec.stride,
                         options.avgpool_mode);
        break;
      case LayerKind::Linear:
        r = linear_core(lam, params.weight, params.bias, a_in.size());
        break;
      case LayerKind::Dropout:
        r.lambda_in = dropout_core(lam, spec.dropout);
        break;
      case LayerKind::Flatten:
        r.lambda_in = lam;  // reshape only
        break;
    }

    double csum = 0.0;
    for (double v : r.constant) csum += v;
    st.constant_sum[li] = csum;
    st.residual[li] = r.residual;
    ce.layer_residuals[li] = r.residual;
    if (!r.constant.empty()) {
      ce.layer_const_maps[li] = channel_sum_map(r.constant, a_out.shape);
      if (options.keep_layer_tensors) st.constant[li] = to_tensor(a_out.shape, r.constant);
    } else {
      // Layers without a constant contribution get an explicit zero map.
      Tensor zero = ce.layer_score_maps[li];
      for (float& v : zero.data) v = 0.0f;
      ce.layer_const_maps[li] = std::move(zero);
    }

    lam = std::move(r.lambda_in);

    if (l == last_linear) {
      const Tensor& feat = tape.input_of(l);
      ce.feature_scores.resize(feat.data.size());
      for (std::size_t i = 0; i < feat.data.size(); ++i) {
        ce.feature_scores[i] =
            static_cast<float>(lam[i] * static_cast<double>(feat.data[i]));
      }
    }
  }

  // Input-layer scores.
  st.input_lambda = to_tensor(tape.input.shape, lam);
  {
    std::vector<double> s(lam.size());
    double ssum = 0.0;
    for (std::size_t i = 0; i < lam.size(); ++i) {
      s[i] = lam[i] * static_cast<double>(tape.input.data[i]);
      ssum += s[i];
    }
    st.input_score = to_tensor(tape.input.shape, s);
    ce.input_score_map = st.input_score;
    st.input_score_sum = ssum;
  }
  double ktotal = 0.0;
  for (std::size_t l = 0; l < st.constant_sum.size(); ++l) {
    ktotal += st.constant_sum[l] + st.residual[l];
  }
  st.total = st.input_score_sum + ktotal;
  ce.total = st.total;
  return out;
}

}  // namespace

ExplainResult explain(const ModelGraph& model, const ForwardTape& tape,
                      const std::vector<int>& classes, const ExplainOptions& options) {
  if (tape.outputs.size() != static_cast<std::size_t>(model.layer_count())) {
    throw ShapeError("explain: tape layer count does not match the model");
  }
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= tape.logits.size()) {
      throw std::invalid_argument("explain: class " + std::to_string(c) + " out of range");
    }
  }

  ExplainResult result;
  result.bundle.logits = tape.logits;
  result.states.resize(classes.size());
  result.bundle.classes.resize(classes.size());

  int threads = options.threads;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(classes.size())));

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ClassResult r = explain_one_class(model, tape, classes[i], options);
      result.states[i] = std::move(r.state);
      result.bundle.classes[i] = std::move(r.expl);
    }
  };

  if (threads == 1) {
    run_range(0, classes.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (classes.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * per;
      const std::size_t end = std::min(classes.size(), begin + per);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return result;
}

Tensor layer_score_map(const ScoreState& state, std::int64_t layer) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= state.score.size()) {
    throw std::invalid_argument("layer_score_map: layer " + std::to_string(layer) +
                                " out of range (full state required)");
  }
  const Tensor& s = state.score[static_cast<std::size_t>(layer)];
  if (s.rank() >= 2) {
    const Map2D m = to_map2d(s);
    Tensor out({m.h, m.w});
    for (std::int64_t i = 0; i < m.size(); ++i) {
      out.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data[static_cast<std::size_t>(i)]);
    }
    return out;
  }
  return to_tensor({1, 1}, {tensor_sum(s)});
}

}  // namespace scoreprop::score
