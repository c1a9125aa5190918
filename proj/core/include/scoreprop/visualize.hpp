#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scoreprop/tensor.hpp"

namespace scoreprop::viz {

struct MapStats {
  double mean = 0.0;
  double sigma = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::array<std::int64_t, 64> histogram{};  // uniform bins over [min, max]
  std::int64_t count = 0;
};

MapStats map_stats(const Map2D& map);

enum class Colormap { Grayscale, SignedDiverging };

enum class ThresholdKind { None, PositiveOnly, NSigma };

struct RenderSpec {
  Colormap colormap = Colormap::SignedDiverging;
  ThresholdKind threshold = ThresholdKind::None;
  double n_sigma = 2.0;
  double overlay_alpha = 0.5;
};

/// Binary keep-mask. PositiveOnly keeps map > 0; NSigma keeps map > n *
/// sigma of the map (strict, so a constant map yields an empty mask).
std::vector<std::uint8_t> threshold_mask(const Map2D& map, const RenderSpec& spec);

/// Encode the map as image bytes: binary PGM (P5) for grayscale, binary
/// PPM (P6) for the signed colormap. Grayscale maps [min,max] affinely to
/// [0,255] (an all-equal map renders mid-gray); signed mode sends negative
/// values to blue, positive to red, scaled by the max absolute value.
/// Pixels cut by the threshold are treated as zero.
std::vector<std::uint8_t> render(const Map2D& map, const RenderSpec& spec);

/// Alpha-blend the rendered map over a base image (CHW, values in [0,1]).
/// alpha 0 returns the base bytes exactly; output is PPM when either side
/// has color.
std::vector<std::uint8_t> overlay(const Tensor& base_image, const Map2D& map,
                                  const RenderSpec& spec);

}  // namespace scoreprop::viz
