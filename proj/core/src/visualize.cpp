#include "scoreprop/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "scoreprop/errors.hpp"

namespace scoreprop::viz {

MapStats map_stats(const Map2D& map) {
  if (map.data.empty()) throw std::invalid_argument("map_stats: empty map");
  MapStats s;
  s.count = static_cast<std::int64_t>(map.data.size());
  s.min = map.data[0];
  s.max = map.data[0];
  double acc = 0.0;
  for (double v : map.data) {
    acc += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = acc / static_cast<double>(s.count);
  double var = 0.0;
  for (double v : map.data) {
    const double d = v - s.mean;
    var += d * d;
  }
  s.sigma = std::sqrt(var / static_cast<double>(s.count));

  const double span = s.max - s.min;
  for (double v : map.data) {
    std::int64_t bin = 0;
    if (span > 0.0) {
      bin = static_cast<std::int64_t>((v - s.min) / span * 64.0);
      bin = std::clamp<std::int64_t>(bin, 0, 63);
    }
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  return s;
}

std::vector<std::uint8_t> threshold_mask(const Map2D& map, const RenderSpec& spec) {
  std::vector<std::uint8_t> mask(map.data.size(), 1);
  switch (spec.threshold) {
    case ThresholdKind::None:
      break;
    case ThresholdKind::PositiveOnly:
      for (std::size_t i = 0; i < map.data.size(); ++i) mask[i] = map.data[i] > 0.0 ? 1 : 0;
      break;
    case ThresholdKind::NSigma: {
      if (spec.n_sigma < 0.0) throw std::invalid_argument("threshold: n must be >= 0");
      const double cut = spec.n_sigma * map_stats(map).sigma;
      for (std::size_t i = 0; i < map.data.size(); ++i) mask[i] = map.data[i] > cut ? 1 : 0;
      break;
    }
  }
  return mask;
}

namespace {

std::vector<std::uint8_t> image_header(bool color, std::int64_t w, std::int64_t h) {
  const std::string head = std::string(color ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                           std::to_string(h) + "\n255\n";
  return {head.begin(), head.end()};
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp<long long>(std::llround(v), 0, 255));
}

}  // namespace

std::vector<std::uint8_t> render(const Map2D& map, const RenderSpec& spec) {
  if (map.data.empty()) throw std::invalid_argument("render: empty map");
  for (double v : map.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("render: non-finite map value");
  }

  std::vector<double> values = map.data;
  if (spec.threshold != ThresholdKind::None) {
    const auto mask = threshold_mask(map, spec);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!mask[i]) values[i] = 0.0;
    }
  }

  if (spec.colormap == Colormap::Grayscale) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::vector<std::uint8_t> out = image_header(false, map.w, map.h);
    if (hi == lo) {
      out.insert(out.end(), values.size(), 128);  // degenerate all-equal map
      return out;
    }
    const double scale = 255.0 / (hi - lo);
    for (double v : values) out.push_back(to_byte((v - lo) * scale));
    return out;
  }

  // Signed diverging: negative -> blue, positive -> red, zero -> black.
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::fabs(v));
  std::vector<std::uint8_t> out = image_header(true, map.w, map.h);
  for (double v : values) {
    std::uint8_t r = 0, b = 0;
    if (max_abs > 0.0) {
      if (v > 0.0) r = to_byte(v / max_abs * 255.0);
      if (v < 0.0) b = to_byte(-v / max_abs * 255.0);
    }
    out.push_back(r);
    out.push_back(0);
    out.push_back(b);
  }
  return out;
}

std::vector<std::uint8_t> overlay(const Tensor& base_image, const Map2D& map,
                                  const RenderSpec& spec) {
  if (base_image.rank() != 3) {
    throw ShapeError("overlay: base image must be CHW, got " + shape_str(base_image.shape));
  }
  const std::int64_t c = base_image.shape[0];
  const std::int64_t h = base_image.shape[1];
  const std::int64_t w = base_image.shape[2];
  if (c != 1 && c != 3) throw ShapeError("overlay: base image must have 1 or 3 channels");
  if (h != map.h || w != map.w) {
    throw ShapeError("overlay: base " + std::to_string(h) + "x" + std::to_string(w) +
                     " does not match map " + std::to_string(map.h) + "x" +
                     std::to_string(map.w));
  }
  const double alpha = spec.overlay_alpha;
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("overlay: alpha must be in [0,1]");
  }

  const auto rendered = render(map, spec);
  const bool rendered_color = spec.colormap == Colormap::SignedDiverging;
  // Skip the rendered header; recompute its length.
  const std::size_t roff = image_header(rendered_color, w, h).size();

  auto base_at = [&](std::int64_t ch, std::int64_t i) {
    const std::int64_t bc = c == 3 ? ch : 0;
    return static_cast<double>(base_image.data[static_cast<std::size_t>(bc * h * w + i)]) * 255.0;
  };
  auto rendered_at = [&](std::int64_t ch, std::int64_t i) -> double {
    if (rendered_color) return rendered[roff + static_cast<std::size_t>(i * 3 + ch)];
    return rendered[roff + static_cast<std::size_t>(i)];
  };

  const std::int64_t out_ch = (c == 3 || rendered_color) ? 3 : 1;
  std::vector<std::uint8_t> out = image_header(out_ch == 3, w, h);
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (std::int64_t ch = 0; ch < out_ch; ++ch) {
      if (alpha == 0.0) {
        out.push_back(to_byte(base_at(ch, i)));
      } else if (alpha == 1.0) {
        out.push_back(to_byte(rendered_at(ch, i)));
      } else {
        out.push_back(to_byte((1.0 - alpha) * base_at(ch, i) + alpha * rendered_at(ch, i)));
      }
    }
  }
  return out;
}

}  // namespace scoreprop::viz
