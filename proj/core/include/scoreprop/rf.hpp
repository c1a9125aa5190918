#pragma once

#include <utility>
#include <vector>

#include "scoreprop/model.hpp"
#include "scoreprop/score.hpp"
#include "scoreprop/tensor.hpp"

namespace scoreprop::rf {

/// Receptive-field bookkeeping convention.
///   Standard: every spatial layer (convs and pools) grows the RF by
///             (k - 1) * jump.
///   ConvOnly: pools update only the jump; their kernel extent adds
///             nothing. The DR architecture's per-layer RF sequence
///             (3, 5, 9, ..., 637) holds in this convention.
enum class RfConvention { Standard, ConvOnly };

/// Per-layer receptive-field geometry. `center` is the input-space
/// coordinate of hidden position (0,0)'s RF center; adjacent hidden
/// positions are `jump` input pixels apart. Layers after flatten are
/// `vector` entries with a single position covering the whole span.
struct RfEntry {
  std::int64_t layer = -1;
  LayerKind kind = LayerKind::Relu;
  bool spatial = false;  // true for conv/pool layers (the table rows)
  bool vector = false;
  std::int64_t rf_h = 1, rf_w = 1;
  std::int64_t jump_h = 1, jump_w = 1;
  double center_h = 0.0, center_w = 0.0;
  std::int64_t extent_h = 1, extent_w = 1;  // hidden spatial extents
};

/// One entry per model layer; non-spatial layers inherit the geometry of
/// the spatial layer below them.
std::vector<RfEntry> compute_rf_table(const ModelGraph& model, RfConvention convention);

/// Input coordinate of the RF center of hidden position (y,x), clamped to
/// the canvas bounds.
std::pair<double, double> rf_center(const RfEntry& entry, std::int64_t y, std::int64_t x,
                                    std::int64_t canvas_h, std::int64_t canvas_w);

struct SplatConfig {
  double sigma_divisor = 2.0;  // sigma = RF / divisor per axis
  bool renormalize = true;     // exact unit mass inside the truncated RF
  RfConvention convention = RfConvention::ConvOnly;
};

/// Adds one truncated 2D Gaussian per hidden position (sigma = RF /
/// sigma_divisor, truncated to the RF square clipped to the canvas, unit
/// mass when renormalized) scaled by the map value. The canvas total
/// equals the map total up to double rounding.
Map2D gaussian_splat(const Tensor& map, const RfEntry& entry, const SplatConfig& cfg,
                     std::int64_t canvas_h, std::int64_t canvas_w);

/// Splat a hidden-layer map (rank-2, channel-summed) into input space
/// using layer l's table entry.
Map2D map_layer_to_input(const ModelGraph& model, const Tensor& hidden_map, std::int64_t layer,
                         const SplatConfig& cfg);

/// Channel-summed input scores plus every layer's splatted constant map
/// plus residuals spread uniformly over their layer's RF coverage. The
/// total equals the class logit within the conservation tolerance.
Map2D total_input_map(const ModelGraph& model, const score::ClassExplanation& ce,
                      const SplatConfig& cfg);

}  // namespace scoreprop::rf
