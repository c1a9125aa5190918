#include "scoreprop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "scoreprop/errors.hpp"

namespace scoreprop::oracle {

namespace {

// Nonlinearity decisions of one double-precision pass: ReLU activity bits
// and max-pool selections, used to detect boundary flips between nearby
// inputs.
struct LiveTrace {
  std::vector<std::uint8_t> relu;
  std::vector<std::int64_t> pool;
};

// Double-precision forward of one layer. With `reference` set, ReLU masks
// and max-pool selections are frozen to the reference tape; otherwise they
// are taken live (and recorded into `trace` when given). This re-derives
// every layer from its definition rather than reusing the score engine's
// backward rules, so the two sides stay independent.
std::vector<double> eval_layer(const LayerSpec& spec, const LayerParams& params,
                               const std::vector<double>& in,
                               const std::vector<std::int64_t>& in_shape,
                               const std::vector<std::int64_t>& out_shape,
                               const ForwardTape* reference, std::int64_t layer,
                               LiveTrace* trace) {
  const auto li = static_cast<std::size_t>(layer);
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const std::int64_t ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
      const std::int64_t oc = out_shape[0], oh = out_shape[1], ow = out_shape[2];
      std::vector<double> out(static_cast<std::size_t>(oc * oh * ow), 0.0);
      const float* w = params.weight.data.data();
      const std::int64_t kh = spec.kernel.h, kw = spec.kernel.w;
      std::size_t o = 0;
      for (std::int64_t co = 0; co < oc; ++co) {
        for (std::int64_t yo = 0; yo < oh; ++yo) {
          const std::int64_t y0 = yo * spec.stride.h - spec.pad.h;
          for (std::int64_t xo = 0; xo < ow; ++xo, ++o) {
            const std::int64_t x0 = xo * spec.stride.w - spec.pad.w;
            double acc = params.bias[static_cast<std::size_t>(co)];
            for (std::int64_t ci = 0; ci < ic; ++ci) {
              const std::int64_t wbase = ((co * ic + ci) * kh) * kw;
              const std::int64_t xbase = ci * ih * iw;
              for (std::int64_t ky = 0; ky < kh; ++ky) {
                const std::int64_t yi = y0 + ky;
                if (yi < 0 || yi >= ih) continue;
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                  const std::int64_t xi = x0 + kx;
                  if (xi < 0 || xi >= iw) continue;
                  acc += in[static_cast<std::size_t>(xbase + yi * iw + xi)] *
                         static_cast<double>(w[wbase + ky * kw + kx]);
                }
              }
            }
            out[o] = acc;
          }
        }
      }
      return out;
    }
    case LayerKind::BatchNorm: {
      const std::int64_t c = in_shape[0];
      const std::int64_t plane = in_shape[1] * in_shape[2];
      std::vector<double> out(in.size());
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto ci = static_cast<std::size_t>(ch);
        const double sigma =
            std::sqrt(static_cast<double>(params.var[ci]) + static_cast<double>(spec.eps));
        for (std::int64_t j = 0; j < plane; ++j) {
          const auto i = static_cast<std::size_t>(ch * plane + j);
          out[i] = static_cast<double>(params.beta[ci]) +
                   static_cast<double>(params.gamma[ci]) *
                       ((in[i] - static_cast<double>(params.mean[ci])) / sigma);
        }
      }
      return out;
    }
    case LayerKind::Relu: {
      std::vector<double> out(in.size(), 0.0);
      if (reference) {
        const Tensor& ref_in = reference->input_of(layer);
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (ref_in.data[i] > 0.0f) out[i] = in[i];
        }
      } else {
        for (std::size_t i = 0; i < in.size(); ++i) {
          const bool active = in[i] > 0.0;
          if (active) out[i] = in[i];
          if (trace) trace->relu.push_back(active ? 1 : 0);
        }
      }
      return out;
    }
    case LayerKind::MaxPool: {
      if (reference) {
        const PoolIndexMap& idx = *reference->pool_indices[li];
        std::vector<double> out(idx.index.size());
        for (std::size_t i = 0; i < idx.index.size(); ++i) {
          out[i] = in[static_cast<std::size_t>(idx.index[i])];
        }
        return out;
      }
      const std::int64_t c = in_shape[0], ih = in_shape[1], iw = in_shape[2];
      const std::int64_t oh = out_shape[1], ow = out_shape[2];
      std::vector<double> out(static_cast<std::size_t>(c * oh * ow));
      std::size_t o = 0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t yo = 0; yo < oh; ++yo) {
          for (std::int64_t xo = 0; xo < ow; ++xo, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t best_idx = -1;
            for (std::int64_t ky = 0; ky < spec.kernel.h; ++ky) {
              for (std::int64_t kx = 0; kx < spec.kernel.w; ++kx) {
                const std::int64_t idx = ch * ih * iw + (yo * spec.stride.h + ky) * iw +
                                         xo * spec.stride.w + kx;
                if (in[static_cast<std::size_t>(idx)] > best) {
                  best = in[static_cast<std::size_t>(idx)];
                  best_idx = idx;
                }
              }
            }
            out[o] = best;
            if (trace) trace->pool.push_back(best_idx);
          }
        }
      }
      return out;
    }
    case LayerKind::AvgPool: {
      const std::int64_t c = in_shape[0], ih = in_shape[1], iw = in_shape[2];
      const std::int64_t oh = out_shape[1], ow = out_shape[2];
      std::vector<double> out(static_cast<std::size_t>(c * oh * ow), 0.0);
      const double inv_n = 1.0 / static_cast<double>(spec.kernel.h * spec.kernel.w);
      std::size_t o = 0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t yo = 0; yo < oh; ++yo) {
          for (std::int64_t xo = 0; xo < ow; ++xo, ++o) {
            double acc = 0.0;
            for (std::int64_t ky = 0; ky < spec.kernel.h; ++ky) {
              for (std::int64_t kx = 0; kx < spec.kernel.w; ++kx) {
                acc += in[static_cast<std::size_t>(ch * ih * iw +
                                                   (yo * spec.stride.h + ky) * iw +
                                                   xo * spec.stride.w + kx)];
              }
            }
            out[o] = acc * inv_n;
          }
        }
      }
      return out;
    }
    case LayerKind::Linear: {
      const std::int64_t n_out = spec.out_channels;
      const std::int64_t n_in = spec.in_channels;
      std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
      const float* w = params.weight.data.data();
      for (std::int64_t co = 0; co < n_out; ++co) {
        double acc = params.bias[static_cast<std::size_t>(co)];
        for (std::int64_t j = 0; j < n_in; ++j) {
          acc += static_cast<double>(w[co * n_in + j]) * in[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(co)] = acc;
      }
      return out;
    }
    case LayerKind::Dropout: {
      std::vector<double> out(in.size());
      const double keep = static_cast<double>(1.0f - spec.dropout);
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * keep;
      return out;
    }
    case LayerKind::Flatten:
      return in;
  }
  throw ShapeError("frozen_forward: unknown layer kind");
}

std::vector<double> run_double(const ModelGraph& model, const std::vector<double>& input,
                               const ForwardTape* reference, LiveTrace* trace) {
  std::vector<double> cur = input;
  std::vector<std::int64_t> shape = model.input_shape();
  for (std::int64_t l = 0; l < model.layer_count(); ++l) {
    const auto& out_shape = model.output_shapes()[static_cast<std::size_t>(l)];
    cur = eval_layer(model.spec(l), model.params(l), cur, shape, out_shape, reference, l, trace);
    shape = out_shape;
  }
  return cur;
}

}  // namespace

std::vector<double> frozen_forward(const ModelGraph& model, const ForwardTape& reference,
                                   const std::vector<double>& input, int class_index) {
  std::vector<double> cur = run_double(model, input, &reference, nullptr);
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= cur.size()) {
    throw std::invalid_argument("frozen_forward: class out of range");
  }
  return {cur[static_cast<std::size_t>(class_index)]};
}

LinearizationResult linearize_at_input(const ModelGraph& model, const Tensor& input,
                                       int class_index, double step) {
  const ForwardTape tape = forward_with_tape(model, input);

  std::vector<double> base(input.data.begin(), input.data.end());
  const double f0 = frozen_forward(model, tape, base, class_index)[0];

  LinearizationResult r;
  r.class_index = class_index;
  r.gradient = Tensor(tape.input.shape);

  // The frozen network is affine, so a single forward difference per pixel
  // recovers the effective gradient exactly (up to double rounding).
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double saved = base[i];
    base[i] = saved + step;
    const double f1 = frozen_forward(model, tape, base, class_index)[0];
    base[i] = saved;
    r.gradient.data[i] = static_cast<float>((f1 - f0) / step);
  }

  double dot = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    dot += static_cast<double>(r.gradient.data[i]) * base[i];
  }
  r.constant = f0 - dot;
  return r;
}

bool sampled_gradient(const ModelGraph& model, const Tensor& input, int class_index,
                      std::int64_t pixel, double step, double* out) {
  std::vector<double> x(input.data.begin(), input.data.end());

  LiveTrace base, plus, minus;
  run_double(model, x, nullptr, &base);

  x[static_cast<std::size_t>(pixel)] += step;
  const std::vector<double> fp = run_double(model, x, nullptr, &plus);
  x[static_cast<std::size_t>(pixel)] -= 2.0 * step;
  const std::vector<double> fm = run_double(model, x, nullptr, &minus);

  // A ReLU activity flip or max-pool winner change under +-step puts the
  // sample on a kink of the piecewise-linear function.
  if (plus.relu != base.relu || minus.relu != base.relu || plus.pool != base.pool ||
      minus.pool != base.pool) {
    return false;
  }

  *out = (fp[static_cast<std::size_t>(class_index)] -
          fm[static_cast<std::size_t>(class_index)]) /
         (2.0 * step);
  return true;
}

bool ConservationReport::all_pass() const {
  for (const ClassCheck& c : checks) {
    if (!(c.engine_rel_err <= engine_tol) || !(c.mapped_rel_err <= mapped_tol)) return false;
  }
  return true;
}

std::string ConservationReport::to_text() const {
  std::ostringstream os;
  for (const ClassCheck& c : checks) {
    const bool ep = c.engine_rel_err <= engine_tol;
    const bool mp = c.mapped_rel_err <= mapped_tol;
    os << "conservation.engine.c" << c.class_index << " rel_err=" << c.engine_rel_err
       << " tol=" << engine_tol << " " << (ep ? "PASS" : "FAIL") << "\n";
    os << "conservation.mapped.c" << c.class_index << " rel_err=" << c.mapped_rel_err
       << " tol=" << mapped_tol << " " << (mp ? "PASS" : "FAIL") << "\n";
  }
  return os.str();
}

ConservationReport check_conservation(const ModelGraph& model, const Tensor& input,
                                      const std::vector<int>& classes, score::AvgPoolMode mode,
                                      double engine_tol, double mapped_tol) {
  const ForwardTape tape = forward_with_tape(model, input);
  score::ExplainOptions options;
  options.avgpool_mode = mode;
  options.keep_layer_tensors = false;
  const auto result = score::explain(model, tape, classes, options);

  rf::SplatConfig cfg;
  ConservationReport report;
  report.engine_tol = engine_tol;
  report.mapped_tol = mapped_tol;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& ce = result.bundle.classes[i];
    ClassCheck c;
    c.class_index = classes[i];
    c.logit = ce.logit;
    c.engine_total = result.states[i].total;
    c.engine_rel_err = std::fabs(c.logit - c.engine_total) / std::max(1.0, std::fabs(c.logit));
    c.mapped_total = rf::total_input_map(model, ce, cfg).sum();
    c.mapped_rel_err = std::fabs(c.logit - c.mapped_total) / std::max(1.0, std::fabs(c.logit));
    report.checks.push_back(c);
  }
  return report;
}

BoundingBox rf_footprint(const ModelGraph& model, std::int64_t layer, std::int64_t channel,
                         std::int64_t y, std::int64_t x, float delta) {
  if (layer < 0 || layer >= model.layer_count()) {
    throw std::invalid_argument("rf_footprint: layer out of range");
  }
  const auto& out_shape = model.output_shapes()[static_cast<std::size_t>(layer)];
  if (out_shape.size() != 3) {
    throw std::invalid_argument("rf_footprint: layer output is not spatial");
  }
  const std::int64_t unit =
      (channel * out_shape[1] + y) * out_shape[2] + x;

  const auto& in_shape = model.input_shape();
  Tensor input(in_shape);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    input.data[i] = 0.5f + 0.001f * static_cast<float>(i % 17);
  }

  auto unit_value = [&](const Tensor& img) {
    Tensor cur = img;
    for (std::int64_t l = 0; l <= layer; ++l) {
      std::optional<PoolIndexMap> idx;
      cur = apply_layer(model.spec(l), model.params(l), cur, &idx);
    }
    return cur.data[static_cast<std::size_t>(unit)];
  };

  const float base = unit_value(input);
  BoundingBox box;
  box.y0 = in_shape[1];
  box.x0 = in_shape[2];
  for (std::int64_t py = 0; py < in_shape[1]; ++py) {
    for (std::int64_t px = 0; px < in_shape[2]; ++px) {
      bool changed = false;
      for (std::int64_t pc = 0; pc < in_shape[0] && !changed; ++pc) {
        Tensor mod = input;
        mod.at3(pc, py, px) += delta;
        changed = unit_value(mod) != base;
      }
      if (changed) {
        box.y0 = std::min(box.y0, py);
        box.y1 = std::max(box.y1, py);
        box.x0 = std::min(box.x0, px);
        box.x1 = std::max(box.x1, px);
      }
    }
  }
  return box;
}

}  // namespace scoreprop::oracle
