#include "scoreprop/rf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scoreprop/errors.hpp"

namespace scoreprop::rf {

namespace {

struct AxisState {
  std::int64_t rf = 1;
  std::int64_t jump = 1;
  double center = 0.0;
  std::int64_t extent = 1;
};

void apply_spatial(AxisState& s, std::int64_t k, std::int64_t stride, std::int64_t pad,
                   bool grows_rf) {
  if (grows_rf) s.rf += (k - 1) * s.jump;
  s.center += (static_cast<double>(k - 1) / 2.0 - static_cast<double>(pad)) *
              static_cast<double>(s.jump);
  s.jump *= stride;
}

// Collapse the remaining spatial span into a single global position.
void collapse(AxisState& s) {
  s.rf += (s.extent - 1) * s.jump;
  s.center += static_cast<double>(s.extent - 1) / 2.0 * static_cast<double>(s.jump);
  s.extent = 1;
  s.jump = 0;
}

}  // namespace

std::vector<RfEntry> compute_rf_table(const ModelGraph& model, RfConvention convention) {
  std::vector<RfEntry> table;
  table.reserve(static_cast<std::size_t>(model.layer_count()));

  AxisState h, w;
  const auto& in_shape = model.input_shape();
  if (in_shape.size() == 3) {
    h.extent = in_shape[1];
    w.extent = in_shape[2];
  } else {
    h.extent = 1;
    w.extent = numel(in_shape);
  }
  bool vector_stage = in_shape.size() < 3;
  if (vector_stage) {
    collapse(h);
    collapse(w);
  }

  for (std::int64_t l = 0; l < model.layer_count(); ++l) {
    const LayerSpec& spec = model.spec(l);
    const auto& out_shape = model.output_shapes()[static_cast<std::size_t>(l)];

    switch (spec.kind) {
      case LayerKind::Conv2d:
        apply_spatial(h, spec.kernel.h, spec.stride.h, spec.pad.h, true);
        apply_spatial(w, spec.kernel.w, spec.stride.w, spec.pad.w, true);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const bool grows = convention == RfConvention::Standard;
        apply_spatial(h, spec.kernel.h, spec.stride.h, 0, grows);
        apply_spatial(w, spec.kernel.w, spec.stride.w, 0, grows);
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Linear:
        if (!vector_stage) {
          collapse(h);
          collapse(w);
          vector_stage = true;
        }
        break;
      default:
        break;  // batchnorm/relu/dropout inherit the geometry below them
    }

    if (!vector_stage && out_shape.size() >= 3) {
      h.extent = out_shape[out_shape.size() - 2];
      w.extent = out_shape[out_shape.size() - 1];
    }

    RfEntry e;
    e.layer = l;
    e.kind = spec.kind;
    e.spatial = spec.kind == LayerKind::Conv2d || spec.kind == LayerKind::MaxPool ||
                spec.kind == LayerKind::AvgPool;
    e.vector = vector_stage;
    e.rf_h = h.rf;
    e.rf_w = w.rf;
    e.jump_h = h.jump;
    e.jump_w = w.jump;
    e.center_h = h.center;
    e.center_w = w.center;
    e.extent_h = h.extent;
    e.extent_w = w.extent;
    table.push_back(e);
  }
  return table;
}

std::pair<double, double> rf_center(const RfEntry& entry, std::int64_t y, std::int64_t x,
                                    std::int64_t canvas_h, std::int64_t canvas_w) {
  double cy = entry.center_h + static_cast<double>(y) * static_cast<double>(entry.jump_h);
  double cx = entry.center_w + static_cast<double>(x) * static_cast<double>(entry.jump_w);
  cy = std::clamp(cy, 0.0, static_cast<double>(canvas_h - 1));
  cx = std::clamp(cx, 0.0, static_cast<double>(canvas_w - 1));
  return {cy, cx};
}

namespace {

struct AxisKernel {
  std::int64_t lo = 0;  // first canvas index
  std::vector<double> weight;
  double mass = 0.0;
};

AxisKernel axis_kernel(double center, double rf, double sigma, std::int64_t canvas) {
  AxisKernel k;
  const double half = rf / 2.0;
  const std::int64_t lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(center - half)));
  const std::int64_t hi =
      std::min<std::int64_t>(canvas - 1, static_cast<std::int64_t>(std::floor(center + half)));
  k.lo = lo;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::int64_t i = lo; i <= hi; ++i) {
    const double d = static_cast<double>(i) - center;
    const double g = std::exp(-d * d * inv2s2);
    k.weight.push_back(g);
    k.mass += g;
  }
  return k;
}

}  // namespace

Map2D gaussian_splat(const Tensor& map, const RfEntry& entry, const SplatConfig& cfg,
                     std::int64_t canvas_h, std::int64_t canvas_w) {
  std::int64_t mh = 0, mw = 0;
  if (map.rank() == 2) {
    mh = map.shape[0];
    mw = map.shape[1];
  } else {
    throw ShapeError("gaussian_splat: expected a rank-2 map, got " + shape_str(map.shape));
  }
  if (mh != entry.extent_h || mw != entry.extent_w) {
    throw ShapeError("gaussian_splat: map " + shape_str(map.shape) +
                     " does not match the layer extent " + std::to_string(entry.extent_h) + "x" +
                     std::to_string(entry.extent_w));
  }
  if (!(cfg.sigma_divisor > 0.0)) {
    throw std::invalid_argument("gaussian_splat: sigma divisor must be positive");
  }

  Map2D canvas(canvas_h, canvas_w);
  const double sigma_h = static_cast<double>(entry.rf_h) / cfg.sigma_divisor;
  const double sigma_w = static_cast<double>(entry.rf_w) / cfg.sigma_divisor;
  // Analytic 1D normalization, used when truncation is not renormalized.
  const double norm_h = 1.0 / (sigma_h * std::sqrt(2.0 * 3.14159265358979323846));
  const double norm_w = 1.0 / (sigma_w * std::sqrt(2.0 * 3.14159265358979323846));

  // Interior positions share one kernel per axis: centers step by an
  // integer jump, so the relative offsets repeat.
  const double half_h = static_cast<double>(entry.rf_h) / 2.0;
  const double half_w = static_cast<double>(entry.rf_w) / 2.0;
  bool cached = false;
  std::vector<double> cache_h, cache_w;
  double cache_mass_h = 0.0, cache_mass_w = 0.0;

  for (std::int64_t y = 0; y < mh; ++y) {
    for (std::int64_t x = 0; x < mw; ++x) {
      const double v = map.at2(y, x);
      if (v == 0.0f) continue;
      const double raw_cy = entry.center_h + static_cast<double>(y * entry.jump_h);
      const double raw_cx = entry.center_w + static_cast<double>(x * entry.jump_w);
      const auto [cy, cx] = rf_center(entry, y, x, canvas_h, canvas_w);

      const bool interior = cy == raw_cy && cx == raw_cx && cy - half_h >= 0.0 &&
                            cy + half_h <= static_cast<double>(canvas_h - 1) &&
                            cx - half_w >= 0.0 && cx + half_w <= static_cast<double>(canvas_w - 1);

      AxisKernel kh, kw;
      if (interior) {
        if (!cached) {
          kh = axis_kernel(cy, static_cast<double>(entry.rf_h), sigma_h, canvas_h);
          kw = axis_kernel(cx, static_cast<double>(entry.rf_w), sigma_w, canvas_w);
          cache_h = kh.weight;
          cache_w = kw.weight;
          cache_mass_h = kh.mass;
          cache_mass_w = kw.mass;
          cached = true;
        } else {
          kh.lo = static_cast<std::int64_t>(std::ceil(cy - half_h));
          kw.lo = static_cast<std::int64_t>(std::ceil(cx - half_w));
          kh.weight = cache_h;
          kw.weight = cache_w;
          kh.mass = cache_mass_h;
          kw.mass = cache_mass_w;
        }
      } else {
        kh = axis_kernel(cy, static_cast<double>(entry.rf_h), sigma_h, canvas_h);
        kw = axis_kernel(cx, static_cast<double>(entry.rf_w), sigma_w, canvas_w);
      }

      const double scale = cfg.renormalize ? v / (kh.mass * kw.mass)
                                           : v * norm_h * norm_w;
      for (std::size_t iy = 0; iy < kh.weight.size(); ++iy) {
        const double row_w = scale * kh.weight[iy];
        double* row = canvas.data.data() +
                      (kh.lo + static_cast<std::int64_t>(iy)) * canvas_w + kw.lo;
        for (std::size_t ix = 0; ix < kw.weight.size(); ++ix) {
          row[ix] += row_w * kw.weight[ix];
        }
      }
    }
  }
  return canvas;
}

Map2D map_layer_to_input(const ModelGraph& model, const Tensor& hidden_map, std::int64_t layer,
                         const SplatConfig& cfg) {
  const auto table = compute_rf_table(model, cfg.convention);
  if (layer < 0 || static_cast<std::size_t>(layer) >= table.size()) {
    throw std::invalid_argument("map_layer_to_input: layer out of range");
  }
  const auto& in_shape = model.input_shape();
  const std::int64_t ch = in_shape.size() == 3 ? in_shape[1] : 1;
  const std::int64_t cw = in_shape.size() == 3 ? in_shape[2] : numel(in_shape);
  return gaussian_splat(hidden_map, table[static_cast<std::size_t>(layer)], cfg, ch, cw);
}

Map2D total_input_map(const ModelGraph& model, const score::ClassExplanation& ce,
                      const SplatConfig& cfg) {
  const auto& in_shape = model.input_shape();
  const std::int64_t ch = in_shape.size() == 3 ? in_shape[1] : 1;
  const std::int64_t cw = in_shape.size() == 3 ? in_shape[2] : numel(in_shape);

  Map2D total(ch, cw);
  {
    // Channel-summed input-layer scores form the base of the map.
    const Tensor& in = ce.input_score_map;
    if (in.rank() == 3) {
      const Map2D base = to_map2d(in);
      total.data = base.data;
    } else {
      for (std::int64_t i = 0; i < in.size(); ++i) {
        total.data[static_cast<std::size_t>(i)] = in.data[static_cast<std::size_t>(i)];
      }
    }
  }

  const auto table = compute_rf_table(model, cfg.convention);
  for (std::size_t l = 0; l < ce.layer_const_maps.size(); ++l) {
    const Tensor& cmap = ce.layer_const_maps[l];
    bool nonzero = false;
    for (float v : cmap.data) {
      if (v != 0.0f) {
        nonzero = true;
        break;
      }
    }
    if (nonzero) {
      const Map2D splat = gaussian_splat(cmap, table[l], cfg, ch, cw);
      for (std::size_t i = 0; i < total.data.size(); ++i) total.data[i] += splat.data[i];
    }

    const double residual = ce.layer_residuals[l];
    if (residual != 0.0) {
      // Spread uniformly over the layer's RF coverage.
      const RfEntry& e = table[l];
      const double half_h = static_cast<double>(e.rf_h) / 2.0;
      const double half_w = static_cast<double>(e.rf_w) / 2.0;
      const auto [c0y, c0x] = rf_center(e, 0, 0, ch, cw);
      const auto [c1y, c1x] = rf_center(e, e.extent_h - 1, e.extent_w - 1, ch, cw);
      const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(c0y - half_h)));
      const std::int64_t y1 = std::min<std::int64_t>(ch - 1, static_cast<std::int64_t>(std::floor(c1y + half_h)));
      const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(c0x - half_w)));
      const std::int64_t x1 = std::min<std::int64_t>(cw - 1, static_cast<std::int64_t>(std::floor(c1x + half_w)));
      const double per_pixel = residual / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) total.at(y, x) += per_pixel;
      }
    }
  }
  return total;
}

}  // namespace scoreprop::rf
