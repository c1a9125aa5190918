#include "scoreprop/model.hpp"

#include <cmath>
#include <stdexcept>

#include "scoreprop/errors.hpp"

namespace scoreprop {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Linear: return "linear";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from_name(std::string_view name) {
  for (LayerKind k : {LayerKind::Conv2d, LayerKind::BatchNorm, LayerKind::Relu,
                      LayerKind::MaxPool, LayerKind::AvgPool, LayerKind::Linear,
                      LayerKind::Dropout, LayerKind::Flatten}) {
    if (layer_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

LayerSpec LayerSpec::conv2d(std::int64_t in, std::int64_t out, HW kernel, HW stride, HW pad) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::batchnorm(std::int64_t channels, float eps) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  s.channels = channels;
  s.eps = eps;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}

LayerSpec LayerSpec::maxpool(HW kernel, HW stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::avgpool(HW kernel, HW stride) {
  LayerSpec s;
  s.kind = LayerKind::AvgPool;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::linear(std::int64_t in, std::int64_t out) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

LayerSpec LayerSpec::dropout_layer(float d) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.dropout = d;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

void LayerSpec::validate(int layer_index) const {
  const std::string where = "layer " + std::to_string(layer_index) + " (" +
                            std::string(layer_kind_name(kind)) + "): ";
  switch (kind) {
    case LayerKind::Conv2d:
      if (in_channels <= 0 || out_channels <= 0)
        throw ShapeError(where + "channel counts must be positive");
      if (kernel.h <= 0 || kernel.w <= 0 || stride.h <= 0 || stride.w <= 0)
        throw ShapeError(where + "kernel and stride must be positive");
      if (pad.h < 0 || pad.w < 0) throw ShapeError(where + "padding must be non-negative");
      break;
    case LayerKind::BatchNorm:
      if (channels <= 0) throw ShapeError(where + "channel count must be positive");
      if (!(eps > 0.0f)) throw std::invalid_argument(where + "eps must be positive");
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      if (kernel.h <= 0 || kernel.w <= 0 || stride.h <= 0 || stride.w <= 0)
        throw ShapeError(where + "kernel and stride must be positive");
      break;
    case LayerKind::Linear:
      if (in_channels <= 0 || out_channels <= 0)
        throw ShapeError(where + "feature counts must be positive");
      break;
    case LayerKind::Dropout:
      if (!(dropout >= 0.0f && dropout < 1.0f))
        throw std::invalid_argument(where + "dropout probability must be in [0,1)");
      break;
    case LayerKind::Relu:
    case LayerKind::Flatten:
      break;
  }
}

std::vector<float> SeededParams::take(int /*layer_index*/, std::string_view name,
                                      const std::vector<std::int64_t>& shape) {
  std::vector<float> out(static_cast<std::size_t>(numel(shape)));
  if (name == "weight") {
    std::int64_t fan_in = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (float& v : out) v = uniform(-bound, bound);
  } else if (name == "bias" || name == "beta" || name == "mean") {
    for (float& v : out) v = uniform(-0.25f, 0.25f);
  } else if (name == "gamma") {
    for (float& v : out) v = uniform(0.7f, 1.3f);
  } else if (name == "var") {
    for (float& v : out) v = uniform(0.5f, 1.5f);
  } else {
    for (float& v : out) v = uniform(-0.5f, 0.5f);
  }
  return out;
}

float SeededParams::uniform(float lo, float hi) {
  // 24 explicit mantissa bits; avoids std::uniform_real_distribution so the
  // stream is identical across standard libraries.
  const std::uint32_t r = rng_() >> 8;
  const float u = static_cast<float>(r) * (1.0f / 16777216.0f);
  return lo + (hi - lo) * u;
}

namespace {

void check_params(const LayerSpec& spec, const LayerParams& p, int layer_index) {
  const std::string where = "layer " + std::to_string(layer_index) + " (" +
                            std::string(layer_kind_name(spec.kind)) + "): ";
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const std::vector<std::int64_t> want{spec.out_channels, spec.in_channels, spec.kernel.h,
                                           spec.kernel.w};
      if (p.weight.shape != want)
        throw ShapeError(where + "weight shape " + shape_str(p.weight.shape) +
                         " does not match spec " + shape_str(want));
      if (static_cast<std::int64_t>(p.bias.size()) != spec.out_channels)
        throw ShapeError(where + "bias length mismatch");
      break;
    }
    case LayerKind::Linear: {
      const std::vector<std::int64_t> want{spec.out_channels, spec.in_channels};
      if (p.weight.shape != want)
        throw ShapeError(where + "weight shape " + shape_str(p.weight.shape) +
                         " does not match spec " + shape_str(want));
      if (static_cast<std::int64_t>(p.bias.size()) != spec.out_channels)
        throw ShapeError(where + "bias length mismatch");
      break;
    }
    case LayerKind::BatchNorm: {
      const auto c = static_cast<std::size_t>(spec.channels);
      if (p.gamma.size() != c || p.beta.size() != c || p.mean.size() != c || p.var.size() != c)
        throw ShapeError(where + "normalization vectors must have " + std::to_string(c) +
                         " channels");
      break;
    }
    default:
      break;
  }
}

}  // namespace

std::vector<std::int64_t> infer_layer_shape(const LayerSpec& spec,
                                            const std::vector<std::int64_t>& in_shape,
                                            int layer_index) {
  const std::string where = "layer " + std::to_string(layer_index) + " (" +
                            std::string(layer_kind_name(spec.kind)) + "): ";
  auto chw = [&]() -> std::vector<std::int64_t> {
    if (in_shape.size() == 3) return in_shape;
    if (in_shape.size() == 4 && in_shape[0] == 1) return {in_shape[1], in_shape[2], in_shape[3]};
    throw ShapeError(where + "expected CHW input, got " + shape_str(in_shape));
  };
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const auto s = chw();
      if (s[0] != spec.in_channels)
        throw ShapeError(where + "input has " + std::to_string(s[0]) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
      if (s[1] + 2 * spec.pad.h < spec.kernel.h || s[2] + 2 * spec.pad.w < spec.kernel.w)
        throw ShapeError(where + "kernel does not fit padded input");
      return {spec.out_channels, conv_out_extent(s[1], spec.kernel.h, spec.stride.h, spec.pad.h),
              conv_out_extent(s[2], spec.kernel.w, spec.stride.w, spec.pad.w)};
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
      const auto s = chw();
      if (spec.kernel.h > s[1] || spec.kernel.w > s[2])
        throw ShapeError(where + "window larger than input " + shape_str(s));
      return {s[0], conv_out_extent(s[1], spec.kernel.h, spec.stride.h, 0),
              conv_out_extent(s[2], spec.kernel.w, spec.stride.w, 0)};
    }
    case LayerKind::BatchNorm: {
      const auto s = chw();
      if (s[0] != spec.channels)
        throw ShapeError(where + "input has " + std::to_string(s[0]) +
                         " channels, spec expects " + std::to_string(spec.channels));
      return s;
    }
    case LayerKind::Relu:
    case LayerKind::Dropout:
      return in_shape;
    case LayerKind::Flatten:
      return {numel(in_shape)};
    case LayerKind::Linear: {
      if (numel(in_shape) != spec.in_channels)
        throw ShapeError(where + "input length " + std::to_string(numel(in_shape)) +
                         " does not match spec " + std::to_string(spec.in_channels));
      return {spec.out_channels};
    }
  }
  throw ShapeError(where + "unknown layer kind");
}

ModelGraph::ModelGraph(std::vector<std::int64_t> input_shape, std::vector<LayerSpec> specs,
                       std::vector<LayerParams> params)
    : input_shape_(std::move(input_shape)), specs_(std::move(specs)), params_(std::move(params)) {
  if (specs_.size() != params_.size()) {
    throw ShapeError("model: " + std::to_string(specs_.size()) + " specs but " +
                     std::to_string(params_.size()) + " parameter records");
  }
  std::vector<std::int64_t> shape = input_shape_;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    specs_[l].validate(static_cast<int>(l));
    check_params(specs_[l], params_[l], static_cast<int>(l));
    shape = infer_layer_shape(specs_[l], shape, static_cast<int>(l));
    output_shapes_.push_back(shape);
  }
}

std::int64_t ModelGraph::param_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const LayerParams& p = params_[l];
    n += p.weight.size();
    n += static_cast<std::int64_t>(p.bias.size());
    n += static_cast<std::int64_t>(p.gamma.size());
    n += static_cast<std::int64_t>(p.beta.size());
  }
  return n;
}

std::int64_t ModelGraph::buffer_count() const {
  std::int64_t n = 0;
  for (const LayerParams& p : params_) {
    n += static_cast<std::int64_t>(p.mean.size());
    n += static_cast<std::int64_t>(p.var.size());
  }
  return n;
}

Tensor apply_layer(const LayerSpec& spec, const LayerParams& params, const Tensor& input,
                   std::optional<PoolIndexMap>* indices) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
      return conv2d_forward(input, params.weight, params.bias, spec.stride, spec.pad);
    case LayerKind::BatchNorm:
      return batchnorm_forward(input, params.gamma, params.beta, params.mean, params.var,
                               spec.eps);
    case LayerKind::Relu:
      return relu_forward(input);
    case LayerKind::MaxPool: {
      auto [out, map] = maxpool2d_forward(input, spec.kernel, spec.stride);
      if (indices) *indices = std::move(map);
      return std::move(out);
    }
    case LayerKind::AvgPool:
      return avgpool2d_forward(input, spec.kernel, spec.stride);
    case LayerKind::Linear:
      return linear_forward(input, params.weight, params.bias);
    case LayerKind::Dropout: {
      // Inference-time dropout scales activations by the keep probability.
      Tensor out(input.shape, input.data);
      const float keep = 1.0f - spec.dropout;
      for (float& v : out.data) v *= keep;
      return out;
    }
    case LayerKind::Flatten: {
      Tensor out({numel(input.shape)}, input.data);
      return out;
    }
  }
  throw ShapeError("apply_layer: unknown layer kind");
}

ForwardTape forward_with_tape(const ModelGraph& model, const Tensor& input) {
  std::vector<std::int64_t> in_shape = input.shape;
  if (in_shape.size() == 4 && in_shape[0] == 1) in_shape.erase(in_shape.begin());
  if (in_shape != model.input_shape()) {
    throw ShapeError("forward: input shape " + shape_str(input.shape) +
                     " does not match model input " + shape_str(model.input_shape()));
  }

  ForwardTape tape;
  tape.input = Tensor(in_shape, input.data);
  tape.outputs.reserve(static_cast<std::size_t>(model.layer_count()));
  tape.pool_indices.resize(static_cast<std::size_t>(model.layer_count()));

  const Tensor* cur = &tape.input;
  for (std::int64_t l = 0; l < model.layer_count(); ++l) {
    std::optional<PoolIndexMap>* idx = &tape.pool_indices[static_cast<std::size_t>(l)];
    tape.outputs.push_back(apply_layer(model.spec(l), model.params(l), *cur, idx));
    cur = &tape.outputs.back();
  }
  tape.logits.assign(cur->data.begin(), cur->data.end());
  return tape;
}

namespace {

LayerParams make_params(const LayerSpec& spec, ParamSource& src, int layer_index) {
  LayerParams p;
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const std::vector<std::int64_t> wshape{spec.out_channels, spec.in_channels, spec.kernel.h,
                                             spec.kernel.w};
      p.weight = Tensor(wshape, src.take(layer_index, "weight", wshape));
      p.bias = src.take(layer_index, "bias", {spec.out_channels});
      break;
    }
    case LayerKind::Linear: {
      const std::vector<std::int64_t> wshape{spec.out_channels, spec.in_channels};
      p.weight = Tensor(wshape, src.take(layer_index, "weight", wshape));
      p.bias = src.take(layer_index, "bias", {spec.out_channels});
      break;
    }
    case LayerKind::BatchNorm: {
      p.gamma = src.take(layer_index, "gamma", {spec.channels});
      p.beta = src.take(layer_index, "beta", {spec.channels});
      p.mean = src.take(layer_index, "mean", {spec.channels});
      p.var = src.take(layer_index, "var", {spec.channels});
      break;
    }
    default:
      break;
  }
  return p;
}

}  // namespace

ModelGraph build_dr_model(ParamSource& params) {
  const std::vector<std::int64_t> block_channels{16, 32, 64, 64, 64, 64, 64};

  std::vector<LayerSpec> specs;
  std::int64_t prev = 3;
  for (std::int64_t c : block_channels) {
    for (int rep = 0; rep < 2; ++rep) {
      specs.push_back(LayerSpec::conv2d(prev, c, HW{3, 3}, HW{1, 1}, HW{1, 1}));
      specs.push_back(LayerSpec::batchnorm(c));
      specs.push_back(LayerSpec::relu());
      prev = c;
    }
    specs.push_back(LayerSpec::maxpool(HW{2, 2}, HW{2, 2}));
  }
  // Classifier: 2x2 conv, normalization + activation, 4x4 average pool,
  // then a linear map from the 64 pooled features to the 5 grade logits.
  specs.push_back(LayerSpec::conv2d(64, 64, HW{2, 2}, HW{1, 1}, HW{0, 0}));
  specs.push_back(LayerSpec::batchnorm(64));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::avgpool(HW{4, 4}, HW{4, 4}));
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::linear(64, kDrClasses));

  std::vector<LayerParams> layer_params;
  layer_params.reserve(specs.size());
  for (std::size_t l = 0; l < specs.size(); ++l) {
    layer_params.push_back(make_params(specs[l], params, static_cast<int>(l)));
  }
  return ModelGraph({3, kDrInputSize, kDrInputSize}, std::move(specs),
                    std::move(layer_params));
}

}  // namespace scoreprop
