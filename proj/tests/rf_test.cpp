#include <doctest.h>

#include <cmath>
#include <random>

#include "scoreprop/io.hpp"
#include "scoreprop/model.hpp"
#include "scoreprop/rf.hpp"
#include "test_support.hpp"

using namespace scoreprop;
using namespace scoreprop::rf;
using testsup::random_tensor;
using testsup::t3;

namespace {

std::vector<std::int64_t> conv_rf_sequence(const ModelGraph& model, RfConvention convention) {
  std::vector<std::int64_t> seq;
  for (const RfEntry& e : compute_rf_table(model, convention)) {
    if (e.kind == LayerKind::Conv2d) seq.push_back(e.rf_h);
  }
  return seq;
}

ModelGraph single_conv_model() {
  std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 1, HW{3, 3}, HW{1, 1}, HW{1, 1})};
  std::vector<LayerParams> params{testsup::conv_params(
      1, 1, HW{3, 3}, std::vector<float>(9, 1.0f), std::vector<float>(1, 0.0f))};
  return ModelGraph({1, 8, 8}, specs, params);
}

}  // namespace

TEST_CASE("rf table: a single 3x3 conv has RF 3") {
  const auto table = compute_rf_table(single_conv_model(), RfConvention::ConvOnly);
  REQUIRE(table.size() == 1);
  CHECK(table[0].rf_h == 3);
  CHECK(table[0].rf_w == 3);
  CHECK(table[0].jump_h == 1);
}

TEST_CASE("rf table: the DR architecture conv RF sequence is 3..637") {
  SeededParams params(1);
  const ModelGraph model = build_dr_model(params);
  const auto seq = conv_rf_sequence(model, RfConvention::ConvOnly);
  const std::vector<std::int64_t> expected{3,  5,  9,  13, 21,  29,  45, 61,
                                           93, 125, 189, 253, 381, 509, 637};
  CHECK(seq == expected);
}

TEST_CASE("rf table: standard convention exceeds the pool-blind one at depth") {
  SeededParams params(1);
  const ModelGraph model = build_dr_model(params);
  const auto conv_only = conv_rf_sequence(model, RfConvention::ConvOnly);
  const auto standard = conv_rf_sequence(model, RfConvention::Standard);
  REQUIRE(conv_only.size() == standard.size());
  CHECK(standard[0] == conv_only[0]);
  CHECK(standard[1] == conv_only[1]);
  for (std::size_t i = 2; i < conv_only.size(); ++i) {
    CHECK(standard[i] > conv_only[i]);  // every conv below at least one pool
  }
}

TEST_CASE("rf table: jump is the product of the strides below") {
  SeededParams params(1);
  const ModelGraph model = build_dr_model(params);
  const auto table = compute_rf_table(model, RfConvention::ConvOnly);
  std::int64_t expected_jump = 1;
  for (const auto& e : table) {
    if (e.vector) break;
    CHECK(e.jump_h == expected_jump * (e.kind == LayerKind::MaxPool   ? 2
                                       : e.kind == LayerKind::AvgPool ? 4
                                                                      : 1));
    if (e.kind == LayerKind::MaxPool) expected_jump *= 2;
    if (e.kind == LayerKind::AvgPool) expected_jump *= 4;
  }
}

TEST_CASE("rf table: rf sizes never shrink with depth") {
  SeededParams params(2);
  const ModelGraph model = build_dr_model(params);
  for (RfConvention conv : {RfConvention::ConvOnly, RfConvention::Standard}) {
    const auto table = compute_rf_table(model, conv);
    for (std::size_t i = 1; i < table.size(); ++i) {
      CHECK(table[i].rf_h >= table[i - 1].rf_h);
    }
  }
}

TEST_CASE("rf_center: offsets, linear steps and clamping") {
  const auto table = compute_rf_table(single_conv_model(), RfConvention::ConvOnly);
  const auto [cy, cx] = rf_center(table[0], 0, 0, 8, 8);
  CHECK(cy == 0.0);
  CHECK(cx == 0.0);

  RfEntry jumpy = table[0];
  jumpy.jump_h = 2;
  jumpy.jump_w = 2;
  const auto [y0, x0] = rf_center(jumpy, 0, 0, 8, 8);
  const auto [y1, x1] = rf_center(jumpy, 1, 0, 8, 8);
  CHECK(y1 - y0 == 2.0);
  CHECK(x1 == x0);

  // The last hidden position stays inside the canvas after clamping.
  const auto [yl, xl] = rf_center(jumpy, 100, 100, 8, 8);
  CHECK(yl == 7.0);
  CHECK(xl == 7.0);
}

namespace {

RfEntry simple_entry(std::int64_t extent, std::int64_t jump, std::int64_t rfsize, double center) {
  RfEntry e;
  e.spatial = true;
  e.rf_h = e.rf_w = rfsize;
  e.jump_h = e.jump_w = jump;
  e.center_h = e.center_w = center;
  e.extent_h = 1;
  e.extent_w = extent;
  return e;
}

}  // namespace

TEST_CASE("gaussian_splat: a unit value lands with unit mass") {
  Tensor map({1, 1}, {1.0f});
  RfEntry e = simple_entry(1, 1, 5, 8.0);
  e.extent_h = 1;
  const SplatConfig cfg;
  const Map2D canvas = gaussian_splat(map, e, cfg, 16, 16);
  CHECK(canvas.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gaussian_splat: zero map, zero canvas") {
  Tensor map({1, 2}, {0.0f, 0.0f});
  const Map2D canvas = gaussian_splat(map, simple_entry(2, 2, 3, 4.0), SplatConfig{}, 12, 12);
  for (double v : canvas.data) CHECK(v == 0.0);
}

TEST_CASE("gaussian_splat: overlapping splats superpose") {
  const RfEntry e = simple_entry(2, 2, 7, 6.0);
  const SplatConfig cfg;
  const Map2D both = gaussian_splat(Tensor({1, 2}, {0.5f, 0.25f}), e, cfg, 16, 16);
  const Map2D first = gaussian_splat(Tensor({1, 2}, {0.5f, 0.0f}), e, cfg, 16, 16);
  const Map2D second = gaussian_splat(Tensor({1, 2}, {0.0f, 0.25f}), e, cfg, 16, 16);

  CHECK(both.sum() == doctest::Approx(0.75).epsilon(1e-12));
  // Direct summation oracle: the combined canvas is the sum of singles.
  for (std::int64_t i = 0; i < both.size(); ++i) {
    CHECK(both.data[static_cast<std::size_t>(i)] ==
          doctest::Approx(first.data[static_cast<std::size_t>(i)] +
                          second.data[static_cast<std::size_t>(i)])
              .epsilon(1e-12));
  }
  // In the overlap both positives exceed either alone.
  bool checked = false;
  for (std::int64_t i = 0; i < both.size(); ++i) {
    const double f = first.data[static_cast<std::size_t>(i)];
    const double s = second.data[static_cast<std::size_t>(i)];
    if (f > 1e-9 && s > 1e-9) {
      CHECK(both.data[static_cast<std::size_t>(i)] > f);
      CHECK(both.data[static_cast<std::size_t>(i)] > s);
      checked = true;
    }
  }
  CHECK(checked);
}

TEST_CASE("gaussian_splat: splatting is linear") {
  const RfEntry e = simple_entry(3, 3, 5, 2.0);
  const SplatConfig cfg;
  const Tensor a = random_tensor({1, 3}, 51, -1.0f, 1.0f);
  const Tensor b = random_tensor({1, 3}, 52, -1.0f, 1.0f);
  const double alpha = 1.75, beta = -0.5;
  Tensor mix({1, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    mix.data[i] = static_cast<float>(alpha * a.data[i] + beta * b.data[i]);
  }
  const Map2D ma = gaussian_splat(a, e, cfg, 12, 12);
  const Map2D mb = gaussian_splat(b, e, cfg, 12, 12);
  const Map2D mmix = gaussian_splat(mix, e, cfg, 12, 12);
  for (std::int64_t i = 0; i < mmix.size(); ++i) {
    const double expect = alpha * ma.data[static_cast<std::size_t>(i)] +
                          beta * mb.data[static_cast<std::size_t>(i)];
    // float32 rounding of the mixed map bounds the defect
    CHECK(std::fabs(mmix.data[static_cast<std::size_t>(i)] - expect) <= 1e-7);
  }
}

TEST_CASE("gaussian_splat: mass conservation on randomized maps") {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::int64_t extent = 1 + static_cast<std::int64_t>(rng() % 5);
    const std::int64_t jump = 1 + static_cast<std::int64_t>(rng() % 3);
    const std::int64_t rfsize = 1 + static_cast<std::int64_t>(rng() % 9);
    const double center = static_cast<double>(rng() % 8) - 2.0;
    RfEntry e = simple_entry(extent, jump, rfsize, center);
    e.extent_h = 1 + static_cast<std::int64_t>(rng() % 4);

    Tensor map({e.extent_h, e.extent_w});
    double total = 0.0;
    for (float& v : map.data) {
      v = 0.1f + 0.9f * (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f));
      total += v;
    }
    SplatConfig cfg;
    cfg.sigma_divisor = (trial % 3 == 0) ? 1.5 : (trial % 3 == 1) ? 2.0 : 3.0;
    const Map2D canvas = gaussian_splat(map, e, cfg, 20, 20);
    CHECK(std::fabs(canvas.sum() - total) / total <= 1e-6);
  }
}

TEST_CASE("gaussian_splat: renormalization off loses truncated mass") {
  // With sigma = RF/2 the RF square holds roughly 47% of a 2D Gaussian,
  // not the full mass; renormalization is what makes conservation exact.
  Tensor map({1, 1}, {1.0f});
  SplatConfig cfg;
  cfg.renormalize = false;
  const Map2D canvas = gaussian_splat(map, simple_entry(1, 1, 9, 10.0), cfg, 21, 21);
  CHECK(canvas.sum() < 0.6);
  CHECK(canvas.sum() > 0.3);
}

TEST_CASE("total_input_map: no constants means the bare input map") {
  // conv without bias + near-identity batchnorm + relu + flatten + linear
  // without bias: no constant scores anywhere.
  std::vector<LayerSpec> specs{LayerSpec::conv2d(3, 2, HW{3, 3}, HW{1, 1}, HW{1, 1}),
                               LayerSpec::batchnorm(2),
                               LayerSpec::relu(),
                               LayerSpec::flatten(),
                               LayerSpec::linear(2 * 8 * 8, 5)};
  std::vector<LayerParams> params{
      testsup::conv_params(3, 2, HW{3, 3}, random_tensor({2, 3, 3, 3}, 61, -0.4f, 0.4f).data,
                           std::vector<float>(2, 0.0f)),
      testsup::bn_identity(2),
      LayerParams{},
      LayerParams{},
      testsup::linear_params(2 * 8 * 8, 5,
                             random_tensor({5, 2 * 8 * 8}, 62, -0.2f, 0.2f).data,
                             std::vector<float>(5, 0.0f))};
  const ModelGraph model({3, 8, 8}, specs, params);
  const Tensor input = random_tensor({3, 8, 8}, 63);
  const ForwardTape tape = forward_with_tape(model, input);
  const auto result = score::explain(model, tape, {0});

  const Map2D total = total_input_map(model, result.bundle.classes[0], SplatConfig{});
  const Map2D base = to_map2d(result.bundle.classes[0].input_score_map);
  REQUIRE(total.size() == base.size());
  for (std::int64_t i = 0; i < total.size(); ++i) {
    CHECK(total.data[static_cast<std::size_t>(i)] ==
          doctest::Approx(base.data[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  CHECK(total.sum() == doctest::Approx(tape.logits[0]).epsilon(1e-5));
}

TEST_CASE("total_input_map: toy conservation against the logits") {
  for (std::uint32_t seed : {71u, 72u, 73u}) {
    const ModelGraph model = io::make_toy_model(seed, 2, {4, 8}, 16);
    const Tensor input = random_tensor({3, 16, 16}, seed + 5);
    const ForwardTape tape = forward_with_tape(model, input);
    const auto result = score::explain(model, tape, {0, 1, 2, 3, 4});
    for (const auto& ce : result.bundle.classes) {
      const Map2D total = total_input_map(model, ce, SplatConfig{});
      const double rel = std::fabs(total.sum() - ce.logit) /
                         std::max(1.0, std::fabs(static_cast<double>(ce.logit)));
      CHECK(rel <= 1e-3);
    }
  }
}

TEST_CASE("total_input_map: a class with logit zero sums to zero") {
  // Zero the last-layer row of class 2: its logit is exactly 0.
  std::vector<LayerSpec> specs{LayerSpec::flatten(), LayerSpec::linear(12, 3)};
  std::vector<float> w(36, 0.25f);
  for (std::size_t j = 0; j < 12; ++j) w[2 * 12 + j] = 0.0f;
  std::vector<LayerParams> params{LayerParams{},
                                  testsup::linear_params(12, 3, w, {0.5f, -0.5f, 0.0f})};
  const ModelGraph model({3, 2, 2}, specs, params);
  const Tensor input = random_tensor({3, 2, 2}, 81);
  const ForwardTape tape = forward_with_tape(model, input);
  REQUIRE(tape.logits[2] == 0.0f);
  const auto result = score::explain(model, tape, {2});
  const Map2D total = total_input_map(model, result.bundle.classes[0], SplatConfig{});
  CHECK(std::fabs(total.sum()) <= 1e-9);
}

TEST_CASE("total_input_map: residual mass reaches the canvas") {
  // An average pool fed a map with exact zeros (dead ReLU) produces a
  // residual; the total map must still conserve the logit.
  std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 1, HW{1, 1}, HW{1, 1}, HW{0, 0}),
                               LayerSpec::relu(),
                               LayerSpec::avgpool(HW{2, 2}, HW{2, 2}),
                               LayerSpec::flatten(),
                               LayerSpec::linear(1, 1)};
  std::vector<LayerParams> params{testsup::conv_params(1, 1, HW{1, 1}, {1.0f}, {0.0f}),
                                  LayerParams{},
                                  LayerParams{},
                                  LayerParams{},
                                  testsup::linear_params(1, 1, {2.0f}, {0.25f})};
  const ModelGraph model({1, 2, 2}, specs, params);
  const Tensor input = t3(1, 2, 2, {1.0f, -1.0f, 0.5f, -0.5f});  // two dead units
  const ForwardTape tape = forward_with_tape(model, input);
  const auto result = score::explain(model, tape, {0});
  REQUIRE(result.states[0].residual[2] != 0.0);

  const Map2D total = total_input_map(model, result.bundle.classes[0], SplatConfig{});
  CHECK(total.sum() == doctest::Approx(tape.logits[0]).epsilon(1e-9));
}
