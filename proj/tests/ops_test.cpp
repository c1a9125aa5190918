#include <doctest.h>

#include <cmath>
#include <random>

#include "scoreprop/errors.hpp"
#include "scoreprop/ops.hpp"
#include "test_support.hpp"

using namespace scoreprop;
using testsup::random_tensor;
using testsup::t1;
using testsup::t3;

namespace {

// Reference sliding-window convolution, written independently of the
// production kernel.
float ref_conv_at(const Tensor& in, const Tensor& w, float bias, std::int64_t co,
                  std::int64_t yo, std::int64_t xo, HW stride, HW pad) {
  double acc = bias;
  for (std::int64_t ci = 0; ci < w.shape[1]; ++ci) {
    for (std::int64_t ky = 0; ky < w.shape[2]; ++ky) {
      for (std::int64_t kx = 0; kx < w.shape[3]; ++kx) {
        const std::int64_t yi = yo * stride.h - pad.h + ky;
        const std::int64_t xi = xo * stride.w - pad.w + kx;
        if (yi < 0 || yi >= in.shape[1] || xi < 0 || xi >= in.shape[2]) continue;
        acc += static_cast<double>(in.at3(ci, yi, xi)) *
               static_cast<double>(w.data[static_cast<std::size_t>(
                   ((co * w.shape[1] + ci) * w.shape[2] + ky) * w.shape[3] + kx)]);
      }
    }
  }
  return static_cast<float>(acc);
}

}  // namespace

TEST_CASE("conv2d: all-ones kernel sums the window") {
  const Tensor in = t3(1, 2, 2, {1, 2, 3, 4});
  const Tensor w({1, 1, 2, 2}, {1, 1, 1, 1});
  const Tensor out = conv2d_forward(in, w, {0.0f}, HW{1, 1}, HW{0, 0});
  CHECK(out.shape == std::vector<std::int64_t>{1, 1, 1});
  CHECK(out.at3(0, 0, 0) == 10.0f);
}

TEST_CASE("conv2d: hand dot product with bias") {
  const Tensor in = t3(1, 2, 2, {1, 2, 3, 4});
  const Tensor w({1, 1, 2, 2}, {2, -1, 0, 1});
  const Tensor out = conv2d_forward(in, w, {0.5f}, HW{1, 1}, HW{0, 0});
  CHECK(out.at3(0, 0, 0) == doctest::Approx(4.5).epsilon(1e-7));
}

TEST_CASE("conv2d: padded 3x3 matches the sliding-window oracle") {
  const Tensor in = random_tensor({1, 3, 3}, 11, -1.0f, 1.0f);
  const Tensor w = random_tensor({1, 1, 3, 3}, 12, -1.0f, 1.0f);
  const Tensor out = conv2d_forward(in, w, {0.25f}, HW{1, 1}, HW{1, 1});
  REQUIRE(out.shape == std::vector<std::int64_t>{1, 3, 3});
  for (std::int64_t y = 0; y < 3; ++y) {
    for (std::int64_t x = 0; x < 3; ++x) {
      CHECK(out.at3(0, y, x) ==
            doctest::Approx(ref_conv_at(in, w, 0.25f, 0, y, x, HW{1, 1}, HW{1, 1}))
                .epsilon(1e-6));
    }
  }
  // Center output sees the whole unpadded input.
  double full = 0.25;
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    full += static_cast<double>(in.data[i]) * static_cast<double>(w.data[i]);
  }
  CHECK(out.at3(0, 1, 1) == doctest::Approx(full).epsilon(1e-6));
}

TEST_CASE("conv2d: shape errors name the offending dimension") {
  const Tensor in = t3(2, 2, 2, std::vector<float>(8, 0.0f));
  const Tensor w({1, 1, 2, 2}, {1, 1, 1, 1});
  CHECK_THROWS_WITH_AS(conv2d_forward(in, w, {0.0f}, HW{1, 1}, HW{0, 0}),
                       doctest::Contains("channels"), ShapeError);
  const Tensor w5({1, 2, 5, 5}, std::vector<float>(50, 1.0f));
  CHECK_THROWS_AS(conv2d_forward(in, w5, {0.0f}, HW{1, 1}, HW{0, 0}), ShapeError);
}

TEST_CASE("conv2d: 1x1 ones kernel with zero bias is the identity") {
  const Tensor single = random_tensor({1, 4, 5}, 20, -2.0f, 2.0f);
  const Tensor ones({1, 1, 1, 1}, {1.0f});
  CHECK(conv2d_forward(single, ones, {0.0f}, HW{1, 1}, HW{0, 0}).data == single.data);

  // Multi-channel: a channel-diagonal 1x1 kernel keeps every channel.
  const Tensor in = random_tensor({3, 4, 5}, 21, -2.0f, 2.0f);
  const Tensor w({3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor out = conv2d_forward(in, w, {0, 0, 0}, HW{1, 1}, HW{0, 0});
  CHECK(out.data == in.data);
}

TEST_CASE("maxpool: direct max with recorded index") {
  const auto [out, map] = maxpool2d_forward(t3(1, 2, 2, {1, 3, 2, 0}), HW{2, 2}, HW{2, 2});
  CHECK(out.at3(0, 0, 0) == 3.0f);
  CHECK(map.index[0] == 1);  // position (0,1)
}

TEST_CASE("maxpool: ties break to the lowest flat index") {
  const auto [out, map] = maxpool2d_forward(t3(1, 2, 2, {5, 5, 5, 5}), HW{2, 2}, HW{2, 2});
  CHECK(out.at3(0, 0, 0) == 5.0f);
  CHECK(map.index[0] == 0);
}

TEST_CASE("maxpool: 4x4 ramp with 2x2 stride-2 windows") {
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const auto [out, map] = maxpool2d_forward(t3(1, 4, 4, ramp), HW{2, 2}, HW{2, 2});
  CHECK(out.data == std::vector<float>{5, 7, 13, 15});
}

TEST_CASE("maxpool: window larger than input is a shape error") {
  CHECK_THROWS_AS(maxpool2d_forward(t3(1, 2, 2, {1, 2, 3, 4}), HW{3, 3}, HW{1, 1}), ShapeError);
}

TEST_CASE("maxpool: every recorded index lies inside its window") {
  const Tensor in = random_tensor({2, 7, 9}, 31, -1.0f, 1.0f);
  const HW k{3, 2}, s{2, 3};
  const auto [out, map] = maxpool2d_forward(in, k, s);
  std::size_t o = 0;
  for (std::int64_t c = 0; c < map.shape[0]; ++c) {
    for (std::int64_t yo = 0; yo < map.shape[1]; ++yo) {
      for (std::int64_t xo = 0; xo < map.shape[2]; ++xo, ++o) {
        const std::int64_t idx = map.index[o];
        const std::int64_t ci = idx / (7 * 9);
        const std::int64_t yi = (idx % (7 * 9)) / 9;
        const std::int64_t xi = idx % 9;
        CHECK(ci == c);
        CHECK(yi >= yo * s.h);
        CHECK(yi < yo * s.h + k.h);
        CHECK(xi >= xo * s.w);
        CHECK(xi < xo * s.w + k.w);
      }
    }
  }
}

TEST_CASE("avgpool: hand mean, zero window, constant window") {
  CHECK(avgpool2d_forward(t3(1, 2, 2, {1, 3, 2, 0}), HW{2, 2}, HW{2, 2}).at3(0, 0, 0) == 1.5f);
  CHECK(avgpool2d_forward(t3(1, 2, 2, {0, 0, 0, 0}), HW{2, 2}, HW{2, 2}).at3(0, 0, 0) == 0.0f);
  const Tensor c4 = Tensor::full({1, 4, 4}, 2.75f);
  CHECK(avgpool2d_forward(c4, HW{4, 4}, HW{4, 4}).at3(0, 0, 0) == 2.75f);
}

TEST_CASE("avgpool equals conv2d with a constant 1/N kernel") {
  const Tensor in = random_tensor({1, 6, 6}, 41, -1.0f, 1.0f);
  const Tensor pooled = avgpool2d_forward(in, HW{2, 2}, HW{2, 2});
  const Tensor w({1, 1, 2, 2}, std::vector<float>(4, 0.25f));
  const Tensor conv = conv2d_forward(in, w, {0.0f}, HW{2, 2}, HW{0, 0});
  REQUIRE(pooled.shape == conv.shape);
  for (std::size_t i = 0; i < pooled.data.size(); ++i) {
    CHECK(pooled.data[i] == doctest::Approx(conv.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("batchnorm: identity parameters pass values through") {
  const Tensor in = random_tensor({2, 3, 3}, 51, -2.0f, 2.0f);
  const Tensor out = batchnorm_forward(in, {1, 1}, {0, 0}, {0, 0}, {1, 1}, 0.0f);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(in.data[i]).epsilon(1e-7));
  }
}

TEST_CASE("batchnorm: hand evaluation of the normalization formula") {
  const Tensor in = t3(1, 1, 1, {1.0f});
  const Tensor out = batchnorm_forward(in, {3.0f}, {1.0f}, {0.5f}, {4.0f}, 0.0f);
  CHECK(out.at3(0, 0, 0) == doctest::Approx(1.75).epsilon(1e-7));
}

TEST_CASE("batchnorm: eps keeps a zero-variance channel finite") {
  const Tensor in = t3(1, 1, 2, {0.25f, -0.5f});
  const Tensor out = batchnorm_forward(in, {1.0f}, {0.0f}, {0.0f}, {0.0f}, 1e-5f);
  CHECK(out.all_finite());
  CHECK(out.at3(0, 0, 0) == doctest::Approx(0.25 / std::sqrt(1e-5)).epsilon(1e-5));
}

TEST_CASE("batchnorm: channel mismatch is a shape error") {
  CHECK_THROWS_AS(batchnorm_forward(t3(2, 1, 1, {1, 2}), {1.0f}, {0.0f}, {0.0f}, {1.0f}, 1e-5f),
                  ShapeError);
}

TEST_CASE("relu: clamp at zero") {
  const Tensor out = relu_forward(t1({-1.0f, 0.0f, 3.0f}));
  CHECK(out.data == std::vector<float>{0.0f, 0.0f, 3.0f});
  CHECK(relu_forward(t1({-2.0f})).at1(0) == 0.0f);
  CHECK(relu_forward(t1({2.0f})).at1(0) == 2.0f);
}

TEST_CASE("linear: hand evaluation, zero weights, identity") {
  const Tensor w({1, 2}, {0.5f, -1.0f});
  const Tensor out = linear_forward(t1({4, 1}), w, {2.0f});
  CHECK(out.at1(0) == doctest::Approx(3.0).epsilon(1e-7));

  const Tensor wz({2, 2}, {0, 0, 0, 0});
  const Tensor outz = linear_forward(t1({4, 1}), wz, {1.5f, -0.5f});
  CHECK(outz.data == std::vector<float>{1.5f, -0.5f});

  const Tensor wi({2, 2}, {1, 0, 0, 1});
  CHECK(linear_forward(t1({4, 1}), wi, {0, 0}).data == std::vector<float>{4, 1});

  CHECK_THROWS_AS(linear_forward(t1({1, 2, 3}), w, {0.0f}), ShapeError);
}

TEST_CASE("softmax: symmetry, stability, argmax preservation") {
  const auto sym = softmax({0.0f, 0.0f});
  CHECK(sym[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sym[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto big = softmax({1000.0f, 0.0f});
  CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big[1] >= 0.0);
  CHECK(std::isfinite(big[0]));

  // The grading logits reported for the worked test sample keep their
  // argmax (class 4) through softmax.
  const std::vector<float> logits{-638.9f, -379.7f, -114.6f, 62.8f, 167.1f};
  const auto probs = softmax(logits);
  CHECK(argmax(probs) == 4);
  CHECK(argmax(probs) == argmax(logits));
}

TEST_CASE("softmax: output sums to one within 1e-12") {
  std::mt19937 rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 8;
    std::vector<float> v(n);
    // Wide logit spreads underflow the losing classes to exactly zero;
    // moderate spreads must stay strictly positive.
    const float spread = trial % 2 == 0 ? 2000.0f : 50.0f;
    for (float& x : v) {
      x = (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f) * spread;
    }
    const auto p = softmax(v);
    double sum = 0.0;
    for (double q : p) {
      CHECK(q >= 0.0);
      if (spread == 50.0f) CHECK(q > 0.0);
      sum += q;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    CHECK(argmax(p) == argmax(v));
  }
}

TEST_CASE("forward primitives are bit-deterministic") {
  const Tensor in = random_tensor({2, 5, 5}, 71, -1.0f, 1.0f);
  const Tensor w = random_tensor({3, 2, 3, 3}, 72, -1.0f, 1.0f);
  const std::vector<float> b{0.1f, -0.2f, 0.3f};
  const Tensor a = conv2d_forward(in, w, b, HW{1, 1}, HW{1, 1});
  const Tensor b2 = conv2d_forward(in, w, b, HW{1, 1}, HW{1, 1});
  CHECK(a.data == b2.data);
}

TEST_CASE("forward primitives keep finite inputs finite") {
  const Tensor in = random_tensor({2, 6, 6}, 81, -3.0f, 3.0f);
  const Tensor w = random_tensor({2, 2, 3, 3}, 82, -2.0f, 2.0f);
  const Tensor conv = conv2d_forward(in, w, {0.5f, -0.5f}, HW{1, 1}, HW{1, 1});
  CHECK(conv.all_finite());
  CHECK(relu_forward(conv).all_finite());
  CHECK(avgpool2d_forward(conv, HW{2, 2}, HW{2, 2}).all_finite());
  CHECK(maxpool2d_forward(conv, HW{2, 2}, HW{2, 2}).first.all_finite());
  CHECK(batchnorm_forward(conv, {1.1f, 0.9f}, {0.1f, -0.1f}, {0.2f, 0.0f}, {0.5f, 2.0f}, 1e-5f)
            .all_finite());
}
