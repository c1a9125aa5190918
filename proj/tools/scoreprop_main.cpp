// Command-line front end: inference, explanation, RF tables, validation,
// toy-model generation and heatmap rendering.
//
// Exit codes: 0 success, 2 I/O error, 3 shape/config error, 4 validation
// failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scoreprop/errors.hpp"
#include "scoreprop/io.hpp"
#include "scoreprop/model.hpp"
#include "scoreprop/ops.hpp"
#include "scoreprop/oracle.hpp"
#include "scoreprop/rf.hpp"
#include "scoreprop/score.hpp"
#include "scoreprop/tensor.hpp"
#include "scoreprop/visualize.hpp"

namespace fs = std::filesystem;
using namespace scoreprop;

namespace {

struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

int thread_count_from_env() {
  const char* env = std::getenv("SCOREPROP_THREADS");
  if (!env) return 0;
  return std::atoi(env);
}

Tensor load_input_for(const ModelGraph& model, const fs::path& image_path) {
  Tensor img = io::load_image(image_path);
  const auto& want = model.input_shape();
  if (img.shape == want) return img;
  if (want.size() != 3 || want[1] != want[2]) {
    throw ShapeError("image " + shape_str(img.shape) + " does not match model input " +
                     shape_str(want));
  }
  if (img.shape[0] != want[0]) {
    throw ShapeError("image has " + std::to_string(img.shape[0]) + " channels, model expects " +
                     std::to_string(want[0]));
  }
  return io::preprocess_trim_resize(img, want[1]);
}

Tensor seeded_input(const ModelGraph& model, std::uint32_t seed) {
  Tensor t(model.input_shape());
  std::mt19937 rng(seed);
  for (float& v : t.data) {
    v = static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
  }
  return t;
}

std::vector<std::int64_t> parse_channels(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

viz::RenderSpec parse_threshold(const std::string& text) {
  viz::RenderSpec spec;
  if (text == "none") {
    spec.threshold = viz::ThresholdKind::None;
  } else if (text == "pos") {
    spec.threshold = viz::ThresholdKind::PositiveOnly;
  } else if (text.size() > 5 && text.substr(text.size() - 5) == "sigma") {
    spec.threshold = viz::ThresholdKind::NSigma;
    spec.n_sigma = std::stod(text.substr(0, text.size() - 5));
    if (spec.n_sigma < 0.0) throw std::invalid_argument("threshold multiplier must be >= 0");
  } else {
    throw std::invalid_argument("threshold must be none, pos or <N>sigma");
  }
  return spec;
}

int cmd_infer(const fs::path& model_path, const fs::path& image_path, const fs::path& out_path) {
  const ModelGraph model = io::load_model(model_path);
  const Tensor input = load_input_for(model, image_path);
  const ForwardTape tape = forward_with_tape(model, input);
  const auto probs = softmax(tape.logits);

  std::string doc = "classes " + std::to_string(tape.logits.size()) + "\n";
  for (std::size_t i = 0; i < tape.logits.size(); ++i) {
    doc += "logit " + std::to_string(i) + " " + fmt(tape.logits[i]) + "\n";
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    doc += "prob " + std::to_string(i) + " " + fmt(probs[i], "%.12g") + "\n";
  }
  doc += "argmax " + std::to_string(argmax(tape.logits)) + "\n";
  io::write_bytes(out_path, std::vector<std::uint8_t>(doc.begin(), doc.end()));
  std::cout << doc;
  return 0;
}

int cmd_explain(const fs::path& model_path, const fs::path& image_path,
                const std::string& class_sel, const std::string& avgpool_mode, double sigma_div,
                const std::string& convention, const fs::path& out_dir, bool render_layers) {
  const ModelGraph model = io::load_model(model_path);
  const Tensor input = load_input_for(model, image_path);
  const ForwardTape tape = forward_with_tape(model, input);

  std::vector<int> classes;
  if (class_sel == "all") {
    for (std::size_t i = 0; i < tape.logits.size(); ++i) classes.push_back(static_cast<int>(i));
  } else {
    classes.push_back(std::stoi(class_sel));
  }

  score::ExplainOptions options;
  options.avgpool_mode = avgpool_mode == "linear" ? score::AvgPoolMode::Linear
                                                  : score::AvgPoolMode::EqualSplit;
  options.keep_layer_tensors = false;
  options.threads = thread_count_from_env();
  const auto result = score::explain(model, tape, classes, options);

  rf::SplatConfig cfg;
  cfg.sigma_divisor = sigma_div;
  cfg.convention =
      convention == "standard" ? rf::RfConvention::Standard : rf::RfConvention::ConvOnly;

  fs::create_directories(out_dir);
  bool all_pass = true;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& ce = result.bundle.classes[i];
    const int k = ce.class_index;
    const std::string ck = "c" + std::to_string(k);

    io::save_scoremap(ce.input_score_map, out_dir / ("input_" + ck + ".smap"));
    for (std::size_t l = 0; l < ce.layer_score_maps.size(); ++l) {
      io::save_scoremap(ce.layer_score_maps[l],
                        out_dir / ("scores_" + ck + "_layer" + std::to_string(l) + ".smap"));
      io::save_scoremap(ce.layer_const_maps[l],
                        out_dir / ("const_" + ck + "_layer" + std::to_string(l) + ".smap"));
    }

    const Map2D total = rf::total_input_map(model, ce, cfg);
    io::save_scoremap(map_to_tensor(total), out_dir / ("total_" + ck + ".smap"));

    viz::RenderSpec render_spec;
    io::write_bytes(out_dir / ("total_" + ck + ".ppm"), viz::render(total, render_spec));

    if (render_layers) {
      for (std::size_t l = 0; l < ce.layer_score_maps.size(); ++l) {
        const Map2D mapped = rf::map_layer_to_input(model, ce.layer_score_maps[l],
                                                    static_cast<std::int64_t>(l), cfg);
        io::write_bytes(out_dir / ("scores_" + ck + "_layer" + std::to_string(l) + ".ppm"),
                        viz::render(mapped, render_spec));
      }
    }

    const viz::MapStats stats = viz::map_stats(total);
    std::string st;
    st += "mean " + fmt(stats.mean) + "\n";
    st += "sigma " + fmt(stats.sigma) + "\n";
    st += "min " + fmt(stats.min) + "\n";
    st += "max " + fmt(stats.max) + "\n";
    st += "hist";
    for (std::int64_t n : stats.histogram) st += " " + std::to_string(n);
    st += "\n";
    io::write_bytes(out_dir / ("stats_" + ck + ".txt"),
                    std::vector<std::uint8_t>(st.begin(), st.end()));

    std::string ft;
    for (std::size_t f = 0; f < ce.feature_scores.size(); ++f) {
      ft += std::to_string(f) + " " + fmt(ce.feature_scores[f]) + "\n";
    }
    io::write_bytes(out_dir / ("features_" + ck + ".txt"),
                    std::vector<std::uint8_t>(ft.begin(), ft.end()));

    const double logit = ce.logit;
    const double engine_rel =
        std::fabs(logit - result.states[i].total) / std::max(1.0, std::fabs(logit));
    const double mapped_rel = std::fabs(logit - total.sum()) / std::max(1.0, std::fabs(logit));
    const bool pass = engine_rel <= 1e-3 && mapped_rel <= 1e-3;
    all_pass = all_pass && pass;
    std::cout << "conservation " << ck << " logit=" << fmt(logit)
              << " engine_total=" << fmt(result.states[i].total)
              << " engine_rel=" << fmt(engine_rel) << " mapped_total=" << fmt(total.sum())
              << " mapped_rel=" << fmt(mapped_rel) << " " << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (!all_pass) throw ValidationFailure("conservation check exceeded 1e-3");
  return 0;
}

int cmd_rf(const fs::path& model_path, const std::string& convention) {
  const ModelGraph model = io::load_model(model_path);
  const auto table = rf::compute_rf_table(model, convention == "standard"
                                                     ? rf::RfConvention::Standard
                                                     : rf::RfConvention::ConvOnly);
  for (const auto& e : table) {
    if (!e.spatial) continue;
    std::cout << e.layer << " " << layer_kind_name(e.kind) << " " << e.rf_h << "x" << e.rf_w
              << " " << e.jump_h << "x" << e.jump_w << "\n";
  }
  return 0;
}

int cmd_validate(const fs::path& model_path, const fs::path& image_path, double tol, int seeds) {
  bool all_pass = true;
  double engine_tol = 1e-4, mapped_tol = 1e-3, grad_tol = 1e-3;
  if (tol >= 0.0) engine_tol = mapped_tol = grad_tol = tol;

  auto run_checks = [&](const ModelGraph& model, const Tensor& input, const std::string& tag) {
    std::vector<int> classes;
    const std::int64_t n_out = numel(model.output_shapes().back());
    for (int c = 0; c < n_out; ++c) classes.push_back(c);
    const auto report = oracle::check_conservation(model, input, classes,
                                                   score::AvgPoolMode::EqualSplit, engine_tol,
                                                   mapped_tol);
    std::cout << report.to_text();
    all_pass = all_pass && report.all_pass();

    // Gradient equivalence holds in the linear average-pool mode.
    const ForwardTape tape = forward_with_tape(model, input);
    score::ExplainOptions options;
    options.avgpool_mode = score::AvgPoolMode::Linear;
    options.keep_layer_tensors = false;
    const auto result = score::explain(model, tape, {0}, options);
    const auto lin = oracle::linearize_at_input(model, input, 0);

    double max_rel = 0.0;
    double gmax = 0.0;
    for (float g : lin.gradient.data) gmax = std::max(gmax, std::fabs(static_cast<double>(g)));
    std::mt19937 rng(1234);
    int tested = 0;
    for (int t = 0; t < 200 && tested < 20; ++t) {
      const auto pixel = static_cast<std::int64_t>(rng() % input.data.size());
      double g = 0.0;
      if (!oracle::sampled_gradient(model, input, 0, pixel, 1e-3, &g)) continue;
      ++tested;
      const double lam = result.states[0].input_lambda.data[static_cast<std::size_t>(pixel)];
      const double denom = std::max({std::fabs(g), 1e-3 * gmax, 1e-12});
      max_rel = std::max(max_rel, std::fabs(lam - g) / denom);
    }
    const bool gpass = max_rel <= grad_tol;
    std::cout << tag << ".gradient max_rel=" << fmt(max_rel) << " tol=" << fmt(grad_tol) << " "
              << (gpass ? "PASS" : "FAIL") << "\n";

    // Constant part: everything the input scores do not carry.
    const double k_engine = result.states[0].total - result.states[0].input_score_sum;
    const double k_rel =
        std::fabs(k_engine - lin.constant) / std::max(1.0, std::fabs(lin.constant));
    const bool kpass = k_rel <= grad_tol;
    std::cout << tag << ".constant rel_err=" << fmt(k_rel) << " tol=" << fmt(grad_tol) << " "
              << (kpass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && gpass && kpass;
  };

  if (!model_path.empty()) {
    const ModelGraph model = io::load_model(model_path);
    const Tensor input =
        image_path.empty() ? seeded_input(model, 99) : load_input_for(model, image_path);
    run_checks(model, input, "model");
  }
  for (int s = 1; s <= seeds; ++s) {
    const ModelGraph model = io::make_toy_model(static_cast<std::uint32_t>(s), 2, {4, 8}, 16);
    run_checks(model, seeded_input(model, static_cast<std::uint32_t>(s)),
               "toy" + std::to_string(s));
  }
  if (!all_pass) throw ValidationFailure("validation checks failed");
  std::cout << "all checks passed\n";
  return 0;
}

int cmd_make_toy(std::uint32_t seed, int blocks, const std::string& channels_csv,
                 std::int64_t size, bool dr, const fs::path& out_path) {
  if (dr) {
    SeededParams params(seed);
    io::save_model(build_dr_model(params), out_path);
    return 0;
  }
  io::save_model(io::make_toy_model(seed, blocks, parse_channels(channels_csv), size), out_path);
  return 0;
}

int cmd_render(const fs::path& scores_path, const std::string& threshold,
               const std::string& mode, const fs::path& overlay_path, double alpha,
               const fs::path& out_path) {
  const Tensor map_tensor = io::load_scoremap(scores_path);
  const Map2D map = to_map2d(map_tensor);

  viz::RenderSpec spec = parse_threshold(threshold);
  spec.colormap = mode == "gray" ? viz::Colormap::Grayscale : viz::Colormap::SignedDiverging;
  spec.overlay_alpha = alpha;

  std::vector<std::uint8_t> bytes;
  if (!overlay_path.empty()) {
    bytes = viz::overlay(io::load_image(overlay_path), map, spec);
  } else {
    bytes = viz::render(map, spec);
  }
  io::write_bytes(out_path, bytes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward inference and exact per-pixel score decomposition for small CNNs"};
  app.require_subcommand(1);

  std::string model_path, image_path, out_path, out_dir, scores_path;
  std::string class_sel = "all", avgpool_mode = "equal", convention = "conv-only";
  std::string threshold = "none", mode = "signed", overlay_path, channels_csv = "4,8";
  double sigma_div = 2.0, alpha = 0.5, tol = -1.0;
  std::uint32_t seed = 7;
  int blocks = 2, seeds = 0;
  std::int64_t size = 16;
  bool dr = false, render_layers = false;

  auto* infer = app.add_subcommand("infer", "run forward inference, write probabilities");
  infer->add_option("--model", model_path, "model file")->required();
  infer->add_option("--image", image_path, "PPM/PGM input image")->required();
  infer->add_option("--out", out_path, "probabilities document path")->required();

  auto* explain = app.add_subcommand("explain", "compute per-class score maps and totals");
  explain->add_option("--model", model_path, "model file")->required();
  explain->add_option("--image", image_path, "PPM/PGM input image")->required();
  explain->add_option("--class", class_sel, "all or a class index");
  explain->add_option("--avgpool-mode", avgpool_mode, "equal|linear")
      ->check(CLI::IsMember({"equal", "linear"}));
  explain->add_option("--sigma-div", sigma_div, "sigma = RF / this divisor");
  explain->add_option("--rf-convention", convention, "conv-only|standard")
      ->check(CLI::IsMember({"conv-only", "standard"}));
  explain->add_option("--out-dir", out_dir, "output directory")->required();
  explain->add_flag("--render-layers", render_layers, "also render per-layer mapped maps");

  auto* rf_cmd = app.add_subcommand("rf", "print the receptive-field table");
  rf_cmd->add_option("--model", model_path, "model file")->required();
  rf_cmd->add_option("--convention", convention, "conv-only|standard")
      ->check(CLI::IsMember({"conv-only", "standard"}));

  auto* validate = app.add_subcommand("validate", "run conservation and gradient oracles");
  validate->add_option("--model", model_path, "model file");
  validate->add_option("--image", image_path, "PPM/PGM input image");
  validate->add_option("--tol", tol, "override all tolerances");
  validate->add_option("--seeds", seeds, "number of seeded toy models to check");

  auto* make_toy = app.add_subcommand("make-toy", "write a seeded model file");
  make_toy->add_option("--seed", seed, "generator seed");
  make_toy->add_option("--blocks", blocks, "feature blocks");
  make_toy->add_option("--channels", channels_csv, "per-block channels, comma separated");
  make_toy->add_option("--size", size, "square input size");
  make_toy->add_flag("--dr", dr, "emit the full DR grading architecture instead of a toy");
  make_toy->add_option("--out", out_path, "model file path")->required();

  auto* render = app.add_subcommand("render", "render a score map to PGM/PPM");
  render->add_option("--scores", scores_path, "score map file")->required();
  render->add_option("--threshold", threshold, "none|pos|<N>sigma");
  render->add_option("--mode", mode, "signed|gray")->check(CLI::IsMember({"signed", "gray"}));
  render->add_option("--overlay", overlay_path, "base image to blend under the map");
  render->add_option("--alpha", alpha, "overlay blend factor");
  render->add_option("--out", out_path, "output image path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (app.got_subcommand(infer)) return cmd_infer(model_path, image_path, out_path);
    if (app.got_subcommand(explain)) {
      return cmd_explain(model_path, image_path, class_sel, avgpool_mode, sigma_div, convention,
                         out_dir, render_layers);
    }
    if (app.got_subcommand(rf_cmd)) return cmd_rf(model_path, convention);
    if (app.got_subcommand(validate)) return cmd_validate(model_path, image_path, tol, seeds);
    if (app.got_subcommand(make_toy)) {
      return cmd_make_toy(seed, blocks, channels_csv, size, dr, out_path);
    }
    if (app.got_subcommand(render)) {
      return cmd_render(scores_path, threshold, mode, overlay_path, alpha, out_path);
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
