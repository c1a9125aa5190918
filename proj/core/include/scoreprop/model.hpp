#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scoreprop/ops.hpp"
#include "scoreprop/tensor.hpp"

namespace scoreprop {

enum class LayerKind : int {
  Conv2d,
  BatchNorm,
  Relu,
  MaxPool,
  AvgPool,
  Linear,
  Dropout,
  Flatten,
};

std::string_view layer_kind_name(LayerKind kind);
std::optional<LayerKind> layer_kind_from_name(std::string_view name);

/// One layer's kind plus its hyperparameters. Fields are meaningful only
/// for the kinds that use them.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;

  // conv2d / linear
  std::int64_t out_channels = 0;
  std::int64_t in_channels = 0;
  // conv2d / pools
  HW kernel{1, 1};
  HW stride{1, 1};
  HW pad{0, 0};
  // batchnorm
  std::int64_t channels = 0;
  float eps = 1e-5f;
  // dropout
  float dropout = 0.0f;

  static LayerSpec conv2d(std::int64_t in, std::int64_t out, HW kernel, HW stride, HW pad);
  static LayerSpec batchnorm(std::int64_t channels, float eps = 1e-5f);
  static LayerSpec relu();
  static LayerSpec maxpool(HW kernel, HW stride);
  static LayerSpec avgpool(HW kernel, HW stride);
  static LayerSpec linear(std::int64_t in, std::int64_t out);
  static LayerSpec dropout_layer(float d);
  static LayerSpec flatten();

  /// Validates hyperparameters for the kind (e.g. 0 <= d < 1, eps > 0).
  void validate(int layer_index) const;
};

/// Parameter tensors for one layer; which fields are populated depends on
/// the layer kind (conv/linear: weight+bias; batchnorm: the four vectors).
struct LayerParams {
  Tensor weight;
  std::vector<float> bias;
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
};

/// Supplies parameter values to a model builder. Implementations are pulled
/// in a fixed order; `name` identifies the parameter within the layer and
/// `shape` is the full tensor shape being filled.
class ParamSource {
 public:
  virtual ~ParamSource() = default;
  virtual std::vector<float> take(int layer_index, std::string_view name,
                                  const std::vector<std::int64_t>& shape) = 0;
};

/// Deterministic pseudo-random parameters. Conv/linear weights are uniform
/// with a fan-in bound, batch-norm statistics stay in well-conditioned
/// ranges. Same seed, same values, independent of the standard library's
/// distribution implementations.
class SeededParams : public ParamSource {
 public:
  explicit SeededParams(std::uint32_t seed) : rng_(seed) {}
  std::vector<float> take(int layer_index, std::string_view name,
                          const std::vector<std::int64_t>& shape) override;

 private:
  float uniform(float lo, float hi);
  std::mt19937 rng_;
};

/// Ordered sequence of layer specifications plus their parameters.
/// Immutable after construction; construction validates that consecutive
/// layer shapes compose and that parameter shapes match each spec.
class ModelGraph {
 public:
  ModelGraph(std::vector<std::int64_t> input_shape, std::vector<LayerSpec> specs,
             std::vector<LayerParams> params);

  const std::vector<std::int64_t>& input_shape() const { return input_shape_; }
  std::int64_t layer_count() const { return static_cast<std::int64_t>(specs_.size()); }
  const LayerSpec& spec(std::int64_t l) const { return specs_[static_cast<std::size_t>(l)]; }
  const LayerParams& params(std::int64_t l) const { return params_[static_cast<std::size_t>(l)]; }
  const std::vector<LayerSpec>& specs() const { return specs_; }

  /// Symbolic per-layer output shapes (no data involved).
  const std::vector<std::vector<std::int64_t>>& output_shapes() const { return output_shapes_; }

  /// Trainable parameter count (weights, biases, gamma, beta).
  std::int64_t param_count() const;
  /// Non-trainable count (batch-norm running statistics).
  std::int64_t buffer_count() const;

 private:
  std::vector<std::int64_t> input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<LayerParams> params_;
  std::vector<std::vector<std::int64_t>> output_shapes_;
};

/// Per-layer recorded activations from one forward pass. The input is
/// stored once; layer l's input is layer l-1's output.
struct ForwardTape {
  Tensor input;
  std::vector<Tensor> outputs;
  std::vector<std::optional<PoolIndexMap>> pool_indices;
  std::vector<float> logits;

  const Tensor& input_of(std::int64_t l) const {
    return l == 0 ? input : outputs[static_cast<std::size_t>(l - 1)];
  }
  const Tensor& output_of(std::int64_t l) const { return outputs[static_cast<std::size_t>(l)]; }
};

/// Runs the model on `input`, recording every intermediate activation and
/// every max-pool index map. Accepts a leading batch extent of 1.
ForwardTape forward_with_tape(const ModelGraph& model, const Tensor& input);

/// Applies one layer forward; returns the output and, for max-pool, fills
/// `indices`. Exposed for re-execution checks.
Tensor apply_layer(const LayerSpec& spec, const LayerParams& params, const Tensor& input,
                   std::optional<PoolIndexMap>* indices);

/// Output shape of one layer given its input shape (symbolic).
std::vector<std::int64_t> infer_layer_shape(const LayerSpec& spec,
                                            const std::vector<std::int64_t>& in_shape,
                                            int layer_index);

/// DR grading architecture: 3x640x640 input, 7 feature blocks of two
/// conv3x3(s1,p1)+batchnorm+relu layers with channel plan 16/32/64..., a
/// 2x2 max-pool (stride 2) after every block, then a 2x2 classifier conv
/// (64->64) + batchnorm + relu, 4x4 average pool, flatten to 64 and a
/// linear map to 5 class logits.
ModelGraph build_dr_model(ParamSource& params);

/// Output class count and input size of the DR architecture.
inline constexpr std::int64_t kDrClasses = 5;
inline constexpr std::int64_t kDrInputSize = 640;

}  // namespace scoreprop
