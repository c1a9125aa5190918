// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Heavier full-architecture runs live here rather than in the unit suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef _WIN32
#include <sys/wait.h>
#endif

#include "scoreprop/io.hpp"
#include "scoreprop/model.hpp"
#include "scoreprop/ops.hpp"
#include "scoreprop/oracle.hpp"
#include "scoreprop/rf.hpp"
#include "scoreprop/score.hpp"
#include "scoreprop/tensor.hpp"
#include "scoreprop/visualize.hpp"

using namespace scoreprop;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

bool g_all_pass = true;

void report(int n, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%d] %-28s %s  (%s)\n", n, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_all_pass = g_all_pass && pass;
}

Tensor seeded_input(const std::vector<std::int64_t>& shape, std::uint32_t seed) {
  Tensor t(shape);
  std::mt19937 rng(seed);
  for (float& v : t.data) v = static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
  return t;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "scoreprop_acceptance";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SCOREPROP_CLI_PATH) + " " + args + " > " +
                          (work_dir() / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// --- criterion 1: conservation --------------------------------------------

void criterion_conservation() {
  const auto t0 = Clock::now();
  double max_engine = 0.0, max_mapped = 0.0;
  bool pass = true;

  for (std::uint32_t seed = 1; seed <= 100; ++seed) {
    const ModelGraph model = io::make_toy_model(seed, 2, {4, 8}, 16);
    const Tensor input = seeded_input({3, 16, 16}, seed + 1000);
    const auto report_ = oracle::check_conservation(model, input, {0, 1, 2, 3, 4});
    for (const auto& c : report_.checks) {
      max_engine = std::max(max_engine, c.engine_rel_err);
      max_mapped = std::max(max_mapped, c.mapped_rel_err);
    }
    pass = pass && report_.all_pass();
  }

  // Full DR architecture with seeded random weights, one 640x640 input.
  SeededParams params(2024);
  const ModelGraph dr = build_dr_model(params);
  const Tensor input = seeded_input(dr.input_shape(), 4242);
  const auto dr_report = oracle::check_conservation(dr, input, {0, 1, 2, 3, 4});
  for (const auto& c : dr_report.checks) {
    max_engine = std::max(max_engine, c.engine_rel_err);
    max_mapped = std::max(max_mapped, c.mapped_rel_err);
  }
  pass = pass && dr_report.all_pass();

  const double elapsed = seconds_since(t0);
  pass = pass && elapsed <= 300.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max engine rel %.3g <= 1e-4, max mapped rel %.3g <= 1e-3, %.1fs <= 300s",
                max_engine, max_mapped, elapsed);
  report(1, "conservation", pass, detail);
}

// --- criterion 2: oracle equivalence ---------------------------------------

void criterion_oracle_equivalence() {
  double max_grad_rel = 0.0, max_k_rel = 0.0;
  bool pass = true;
  int total_samples = 0;

  for (std::uint32_t seed = 1; seed <= 10; ++seed) {
    const ModelGraph model = io::make_toy_model(seed, 2, {4, 8}, 16);
    const Tensor input = seeded_input({3, 16, 16}, seed + 2000);
    const ForwardTape tape = forward_with_tape(model, input);

    score::ExplainOptions options;
    options.avgpool_mode = score::AvgPoolMode::Linear;
    options.keep_layer_tensors = false;
    const auto result = score::explain(model, tape, {0}, options);
    const auto lin = oracle::linearize_at_input(model, input, 0);

    double gmax = 0.0;
    for (float g : lin.gradient.data) gmax = std::max(gmax, std::fabs(static_cast<double>(g)));

    std::mt19937 rng(seed + 3000);
    int sampled = 0;
    for (int trial = 0; trial < 400 && sampled < 100; ++trial) {
      const auto pixel = static_cast<std::int64_t>(rng() % input.data.size());
      double g = 0.0;
      if (!oracle::sampled_gradient(model, input, 0, pixel, 1e-3, &g)) continue;
      ++sampled;
      const double lam = result.states[0].input_lambda.data[static_cast<std::size_t>(pixel)];
      const double rel = std::fabs(lam - g) / std::max({std::fabs(g), 1e-3 * gmax, 1e-12});
      max_grad_rel = std::max(max_grad_rel, rel);
    }
    total_samples += sampled;
    pass = pass && sampled >= 100;

    const double k_engine = result.states[0].total - result.states[0].input_score_sum;
    const double k_rel =
        std::fabs(k_engine - lin.constant) / std::max(1.0, std::fabs(lin.constant));
    max_k_rel = std::max(max_k_rel, k_rel);
  }
  pass = pass && max_grad_rel <= 1e-3 && max_k_rel <= 1e-3;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%d samples, max gradient rel %.3g <= 1e-3, max K rel %.3g <= 1e-3",
                total_samples, max_grad_rel, max_k_rel);
  report(2, "oracle equivalence", pass, detail);
}

// --- criterion 3: RF table --------------------------------------------------

void criterion_rf_table() {
  SeededParams params(1);
  const ModelGraph model = build_dr_model(params);
  const auto table = rf::compute_rf_table(model, rf::RfConvention::ConvOnly);
  std::vector<std::int64_t> seq;
  for (const auto& e : table) {
    if (e.kind == LayerKind::Conv2d) seq.push_back(e.rf_h);
  }
  const std::vector<std::int64_t> expected{3,  5,  9,  13, 21,  29,  45, 61,
                                           93, 125, 189, 253, 381, 509, 637};
  const bool pass = seq == expected;
  std::string got = "got";
  for (std::int64_t v : seq) got += " " + std::to_string(v);
  report(3, "rf table sequence", pass, pass ? "3..637 exact (15 conv layers)" : got);
}

// --- criterion 4: architecture shape ----------------------------------------

void criterion_architecture() {
  SeededParams params(7);
  const ModelGraph model = build_dr_model(params);
  const auto& shapes = model.output_shapes();

  std::vector<std::int64_t> after_pools, conv_head, flat;
  for (std::int64_t l = 0; l < model.layer_count(); ++l) {
    const auto& s = shapes[static_cast<std::size_t>(l)];
    if (model.spec(l).kind == LayerKind::MaxPool) after_pools = s;
    if (model.spec(l).kind == LayerKind::Conv2d) conv_head = s;
    if (model.spec(l).kind == LayerKind::Flatten) flat = s;
  }
  const bool pass = model.input_shape() == std::vector<std::int64_t>{3, 640, 640} &&
                    after_pools == std::vector<std::int64_t>{64, 5, 5} &&
                    conv_head == std::vector<std::int64_t>{64, 4, 4} &&
                    flat == std::vector<std::int64_t>{64} &&
                    shapes.back() == std::vector<std::int64_t>{5};
  report(4, "architecture trace", pass, "640 -> 5x5 -> 4x4 -> 64 -> 5");
}

// --- criterion 5: splat mass conservation -----------------------------------

void criterion_splat_mass() {
  std::mt19937 rng(555);
  double max_rel = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    rf::RfEntry e;
    e.spatial = true;
    e.extent_h = 1 + static_cast<std::int64_t>(rng() % 8);
    e.extent_w = 1 + static_cast<std::int64_t>(rng() % 8);
    e.jump_h = e.jump_w = 1 + static_cast<std::int64_t>(rng() % 4);
    e.rf_h = 1 + static_cast<std::int64_t>(rng() % 15);
    e.rf_w = 1 + static_cast<std::int64_t>(rng() % 15);
    e.center_h = static_cast<double>(rng() % 12) - 3.0;
    e.center_w = static_cast<double>(rng() % 12) - 3.0;

    Tensor map({e.extent_h, e.extent_w});
    double total = 0.0;
    for (float& v : map.data) {
      v = 0.1f + 0.9f * (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f));
      total += v;
    }
    rf::SplatConfig cfg;
    cfg.sigma_divisor = 1.0 + static_cast<double>(rng() % 30) / 10.0;
    const Map2D canvas = rf::gaussian_splat(map, e, cfg, 24, 24);
    max_rel = std::max(max_rel, std::fabs(canvas.sum() - total) / total);
  }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "1000 cases, max rel %.3g <= 1e-6", max_rel);
  report(5, "splat mass conservation", max_rel <= 1e-6, detail);
}

// --- criterion 6: rule-level worked examples ---------------------------------

void criterion_rule_examples() {
  bool pass = true;
  std::string fail;

  // Activation split at the recorded point (tanh at 1).
  {
    const auto r = score::score_activation_taylor(
        Tensor({1}, {1.0f}), Tensor({1}, {1.0f}), [](double x) { return std::tanh(x); },
        [](double x) {
          const double t = std::tanh(x);
          return 1.0 - t * t;
        });
    if (std::fabs(r.constant.at1(0) - 0.34162) > 1e-4 ||
        std::fabs(r.lambda_in.at1(0) - 0.41997) > 1e-4) {
      pass = false;
      fail += " activation-split";
    }
  }
  // Normalization split: lambda 2, gamma 3, beta 1, mean 0.5, sigma 2.
  {
    const auto r = score::score_batchnorm(Tensor({1, 1, 1}, {2.0f}), {3.0f}, {1.0f}, {0.5f},
                                          {4.0f}, 0.0f, Tensor({1, 1, 1}, {1.0f}));
    if (std::fabs(r.constant.at3(0, 0, 0) - 0.5) > 1e-6 ||
        std::fabs(r.lambda_in.at3(0, 0, 0) - 3.0) > 1e-6) {
      pass = false;
      fail += " normalization-split";
    }
  }
  // Dropout rule: d = 0.25 scales lambda 4 to 3.
  {
    const auto r = score::score_dropout(Tensor({1}, {4.0f}), 0.25f);
    if (std::fabs(r.lambda_in.at1(0) - 3.0) > 1e-6) {
      pass = false;
      fail += " dropout-rule";
    }
  }
  // Fused block equals the chained rules to 1e-10.
  {
    const Tensor a_in = seeded_input({2, 4, 4}, 61);
    Tensor w({3, 2, 3, 3});
    std::mt19937 rng(62);
    for (float& v : w.data) v = (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f);
    const std::vector<float> b{0.2f, -0.1f, 0.3f};
    const std::vector<float> gamma{1.2f, 0.9f, 1.1f}, beta{0.1f, -0.2f, 0.3f},
        mean{0.0f, 0.1f, -0.1f}, var{1.0f, 0.8f, 1.3f};
    const Tensor conv_out = conv2d_forward(a_in, w, b, HW{1, 1}, HW{1, 1});
    const Tensor bn_out = batchnorm_forward(conv_out, gamma, beta, mean, var, 1e-5f);
    Tensor lam(bn_out.shape);
    for (float& v : lam.data) v = (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f);

    const auto fused = score::score_fused_block(lam, w, b, HW{1, 1}, HW{1, 1}, gamma, beta, mean,
                                                var, 1e-5f, bn_out, a_in);
    const auto relu = score::score_relu(lam, bn_out);
    const auto bn = score::score_batchnorm(relu.lambda_in, gamma, beta, mean, var, 1e-5f, bn_out);
    const auto conv = score::score_conv(bn.lambda_in, w, b, a_in, HW{1, 1}, HW{1, 1});
    double max_diff = 0.0;
    for (std::size_t i = 0; i < fused.lambda_in.data.size(); ++i) {
      max_diff = std::max(max_diff, std::fabs(static_cast<double>(fused.lambda_in.data[i]) -
                                              static_cast<double>(conv.lambda_in.data[i])));
    }
    for (std::size_t i = 0; i < fused.constant.data.size(); ++i) {
      max_diff = std::max(max_diff,
                          std::fabs(static_cast<double>(fused.constant.data[i]) -
                                    static_cast<double>(bn.constant.data[i] +
                                                        conv.constant.data[i])));
    }
    if (max_diff > 1e-10) {
      pass = false;
      fail += " fused-block";
    }
  }
  report(6, "rule-level worked examples", pass,
         pass ? "activation/normalization/dropout splits and fused view (unit suite has the rest)"
              : ("failing:" + fail));
}

// --- criterion 7: softmax argmax invariance ----------------------------------

void criterion_softmax_argmax() {
  std::mt19937 rng(777);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<float> v(n);
    for (float& x : v) {
      x = (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f) * 2000.0f;
    }
    if (argmax(softmax(v)) != argmax(v)) ++violations;
  }
  char detail[64];
  std::snprintf(detail, sizeof(detail), "10000 vectors, %d violations", violations);
  report(7, "softmax argmax invariance", violations == 0, detail);
}

// --- criterion 8: determinism and formats ------------------------------------

void criterion_determinism() {
  bool pass = true;
  std::string fail;
  const fs::path dir = work_dir();

  // Model round-trip.
  const ModelGraph toy = io::make_toy_model(8, 2, {4, 8}, 16);
  const auto model_bytes = io::encode_model(toy);
  if (io::encode_model(io::decode_model(model_bytes)) != model_bytes) {
    pass = false;
    fail += " model";
  }

  // Score-map round-trip.
  const Tensor map = seeded_input({3, 5, 4}, 81);
  const fs::path smap = dir / "roundtrip.smap";
  io::save_scoremap(map, smap);
  const Tensor map_back = io::load_scoremap(smap);
  if (map_back.data != map.data || map_back.shape != map.shape) {
    pass = false;
    fail += " scoremap";
  }

  // Image round-trip.
  const auto image_bytes = io::encode_image(seeded_input({3, 9, 7}, 82));
  if (io::encode_image(io::decode_image(image_bytes)) != image_bytes) {
    pass = false;
    fail += " image";
  }

  // Repeated explain runs are byte-identical.
  const fs::path model_p = dir / "det.spm";
  const fs::path image_p = dir / "det.ppm";
  io::save_model(toy, model_p);
  io::write_bytes(image_p, io::encode_image(seeded_input({3, 16, 16}, 83)));
  const fs::path d1 = dir / "det1";
  const fs::path d2 = dir / "det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const std::string base = "explain --model " + model_p.string() + " --image " +
                           image_p.string() + " --out-dir ";
  if (run_cli(base + d1.string()) != 0 || run_cli(base + d2.string()) != 0) {
    pass = false;
    fail += " explain-run";
  } else {
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(d1)) {
      const fs::path other = d2 / entry.path().filename();
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
        pass = false;
        fail += " explain-bytes";
        break;
      }
      ++compared;
    }
    if (compared == 0) {
      pass = false;
      fail += " explain-empty";
    }
  }
  report(8, "determinism and formats", pass,
         pass ? "model/scoremap/image round-trips and repeated explain byte-identical"
              : ("failing:" + fail));
}

// --- criterion 9: end-to-end timing ------------------------------------------

void criterion_timing() {
  const fs::path dir = work_dir();
  const fs::path model_p = dir / "dr.spm";
  const fs::path image_p = dir / "dr.ppm";
  if (run_cli("make-toy --dr --seed 2024 --out " + model_p.string()) != 0) {
    report(9, "end-to-end timing", false, "could not write the DR model file");
    return;
  }
  io::write_bytes(image_p, io::encode_image(seeded_input({3, 640, 640}, 91)));

  const auto t0 = Clock::now();
  const int rc = run_cli("explain --model " + model_p.string() + " --image " + image_p.string() +
                         " --out-dir " + (dir / "dr_explain").string());
  const double elapsed = seconds_since(t0);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "exit %d, all 5 classes in %.1fs <= 600s", rc, elapsed);
  report(9, "end-to-end timing", rc == 0 && elapsed <= 600.0, detail);
}

}  // namespace

int main() {
  criterion_conservation();
  criterion_oracle_equivalence();
  criterion_rf_table();
  criterion_architecture();
  criterion_splat_mass();
  criterion_rule_examples();
  criterion_softmax_argmax();
  criterion_determinism();
  criterion_timing();
  std::printf("%s\n", g_all_pass ? "ACCEPTANCE: all criteria passed"
                                 : "ACCEPTANCE: criteria failed");
  return g_all_pass ? 0 : 1;
}
