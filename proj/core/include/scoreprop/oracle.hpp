#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreprop/model.hpp"
#include "scoreprop/rf.hpp"
#include "scoreprop/score.hpp"
#include "scoreprop/tensor.hpp"

namespace scoreprop::oracle {

/// Forward pass with the ReLU masks and max-pool selections frozen to
/// those of a reference tape, computed entirely in double precision.
/// On the reference input this reproduces the network output; in a
/// neighbourhood it evaluates the affine function the network locally is.
std::vector<double> frozen_forward(const ModelGraph& model, const ForwardTape& reference,
                                   const std::vector<double>& input, int class_index);

/// Locally-affine view of logit c around `input`: logit = sum(g * input) + K.
struct LinearizationResult {
  Tensor gradient;  // effective gradient, shaped like the input
  double constant = 0.0;
  int class_index = 0;
};

/// Full-map effective gradient via forward differences of the frozen
/// network (exact for piecewise-linear models away from mask boundaries),
/// with K = logit - sum(g * input).
LinearizationResult linearize_at_input(const ModelGraph& model, const Tensor& input,
                                       int class_index, double step = 1e-3);

/// One true (unfrozen) central-difference gradient sample. Returns false
/// when a ReLU or max-pool decision flips under +-step (boundary sample;
/// the caller should resample).
bool sampled_gradient(const ModelGraph& model, const Tensor& input, int class_index,
                      std::int64_t pixel, double step, double* out);

struct ClassCheck {
  int class_index = 0;
  double logit = 0.0;
  double engine_total = 0.0;
  double engine_rel_err = 0.0;
  double mapped_total = 0.0;
  double mapped_rel_err = 0.0;
};

struct ConservationReport {
  std::vector<ClassCheck> checks;
  double engine_tol = 1e-4;
  double mapped_tol = 1e-3;

  bool all_pass() const;
  /// One line per check: name, value, tolerance, pass/fail.
  std::string to_text() const;
};

/// Compares each class logit against the score-engine total and the
/// rf-mapped total-map sum.
ConservationReport check_conservation(const ModelGraph& model, const Tensor& input,
                                      const std::vector<int>& classes,
                                      score::AvgPoolMode mode = score::AvgPoolMode::EqualSplit,
                                      double engine_tol = 1e-4, double mapped_tol = 1e-3);

struct BoundingBox {
  std::int64_t y0 = 0, y1 = -1, x0 = 0, x1 = -1;
  bool empty() const { return y1 < y0 || x1 < x0; }
  std::int64_t height() const { return y1 - y0 + 1; }
  std::int64_t width() const { return x1 - x0 + 1; }
};

/// Bounding box of input pixels whose perturbation changes the chosen
/// unit's activation (exhaustive; small models only).
BoundingBox rf_footprint(const ModelGraph& model, std::int64_t layer, std::int64_t channel,
                         std::int64_t y, std::int64_t x, float delta = 0.5f);

}  // namespace scoreprop::oracle
