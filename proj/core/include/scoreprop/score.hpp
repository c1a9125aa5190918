#pragma once

#include <functional>
#include <vector>

#include "scoreprop/model.hpp"
#include "scoreprop/tensor.hpp"

namespace scoreprop::score {

/// How average-pool scores are split over the window.
///   EqualSplit: each input receives S_out / N; the share of a zero
///               activation is rerouted to the layer's residual.
///   Linear:     lambda_in = lambda_out / N (score proportional to the
///               activation; matches the gradient).
enum class AvgPoolMode { EqualSplit, Linear };

/// Result of propagating scores through one layer: the multiplier map at
/// the layer input, the constant score attributed to the layer per output
/// unit (empty tensor when structurally zero), and the score rerouted from
/// splits that are undefined at zero activations.
struct LayerScores {
  Tensor lambda_in;
  Tensor constant;
  double residual = 0.0;
};

/// Seed multiplier map for one class: 1 at output unit `class_index`,
/// 0 elsewhere, shaped like the logits vector.
Tensor init_class_score(const std::vector<float>& logits, int class_index);

/// Fully connected: lambda_in[j] = sum_c lambda_out[c] w[c,j];
/// S_k[c] = lambda_out[c] b[c].
LayerScores score_linear(const Tensor& lambda_out, const Tensor& weights,
                         const std::vector<float>& bias, const Tensor& a_in);

/// Convolution: lambda_in is the transposed convolution of lambda_out by
/// the kernel (contributions landing on zero padding are discarded);
/// S_k[o] = lambda_out[o] * bias of o's channel.
LayerScores score_conv(const Tensor& lambda_out, const Tensor& weights,
                       const std::vector<float>& bias, const Tensor& a_in, HW stride, HW pad);

/// Batch normalization: lambda_in = lambda_out * gamma / sigma and
/// S_k = lambda_out * (beta - gamma * mean / sigma), sigma = sqrt(var + eps).
LayerScores score_batchnorm(const Tensor& lambda_out, const std::vector<float>& gamma,
                            const std::vector<float>& beta, const std::vector<float>& mean,
                            const std::vector<float>& var, float eps, const Tensor& a_in);

/// ReLU: lambda passes through active units (a_in > 0), S_k = 0.
LayerScores score_relu(const Tensor& lambda_out, const Tensor& a_in);

/// First-order expansion of an arbitrary activation at the recorded
/// activation itself: lambda_in = lambda_out * phi'(a) and
/// S_k = lambda_out * (phi(a) - phi'(a) * a); exact at the expansion point.
LayerScores score_activation_taylor(const Tensor& lambda_out, const Tensor& a_in,
                                    const std::function<double(double)>& phi,
                                    const std::function<double(double)>& dphi);

/// Max pooling: the output score is copied to the input selected in the
/// forward pass; overlapping windows accumulate.
LayerScores score_maxpool(const Tensor& lambda_out, const PoolIndexMap& indices,
                          const Tensor& a_in, HW k, HW stride);

/// Average pooling in either split mode. Both conserve:
/// sum(S_in) + residual = sum(S_out).
LayerScores score_avgpool(const Tensor& lambda_out, const Tensor& a_in, HW k, HW stride,
                          AvgPoolMode mode);

/// Dropout: lambda_in = lambda_out * (1 - d), S_k = 0.
LayerScores score_dropout(const Tensor& lambda_out, float d);

/// Single-view propagation through a conv + batchnorm + relu block.
/// Produces the same lambda_in as chaining the three rules and one
/// constant map equal to the elementwise sum of the chained constants.
LayerScores score_fused_block(const Tensor& lambda_out, const Tensor& conv_weights,
                              const std::vector<float>& conv_bias, HW stride, HW pad,
                              const std::vector<float>& gamma, const std::vector<float>& beta,
                              const std::vector<float>& mean, const std::vector<float>& var,
                              float eps, const Tensor& bn_out, const Tensor& a_in);

/// Per-class propagation state: multiplier, score and constant-score maps
/// for every layer, plus the per-layer residuals and running totals.
/// The full per-layer tensors are kept only when requested (they are
/// proportional to the whole activation volume).
struct ScoreState {
  int class_index = 0;
  Tensor input_lambda;
  Tensor input_score;
  std::vector<Tensor> lambda;        // per-layer multiplier at the layer output
  std::vector<Tensor> score;         // per-layer S = lambda (*) activation
  std::vector<Tensor> constant;      // per-layer S_k (zero-size when none)
  std::vector<double> constant_sum;  // sum of S_k per layer
  std::vector<double> residual;      // residual_k per layer
  double input_score_sum = 0.0;
  double total = 0.0;  // input_score_sum + sum(constant_sum) + sum(residual)
};

/// One class's pre-mapping explanation artifacts.
struct ClassExplanation {
  int class_index = 0;
  float logit = 0.0f;
  Tensor input_score_map;                // C x H x W
  std::vector<Tensor> layer_score_maps;  // channel-summed, hidden resolution
  std::vector<Tensor> layer_const_maps;  // channel-summed S_k maps
  std::vector<double> layer_residuals;
  std::vector<float> feature_scores;  // lambda (*) a entering the last linear layer
  double total = 0.0;
};

struct ExplanationBundle {
  std::vector<float> logits;
  std::vector<ClassExplanation> classes;
};

struct ExplainOptions {
  AvgPoolMode avgpool_mode = AvgPoolMode::EqualSplit;
  bool keep_layer_tensors = true;
  int threads = 1;  // 0 = hardware concurrency, capped by class count
};

struct ExplainResult {
  std::vector<ScoreState> states;
  ExplanationBundle bundle;
};

/// Runs init_class_score and the per-layer rules from the output back to
/// the input for every requested class.
ExplainResult explain(const ModelGraph& model, const ForwardTape& tape,
                      const std::vector<int>& classes, const ExplainOptions& options = {});

/// Channel-sum of S at layer l (requires keep_layer_tensors).
Tensor layer_score_map(const ScoreState& state, std::int64_t layer);

}  // namespace scoreprop::score
