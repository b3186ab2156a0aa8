// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "splat/checkpoint.hpp"
#include "splat/error.hpp"
#include "splat/featnet.hpp"
#include "splat/raster.hpp"
#include "splat/scene_io.hpp"
#include "splat/segsel.hpp"
#include "splat/styler.hpp"
#include "splat/synth.hpp"
#include "splat/trainer.hpp"

namespace splat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::uint64_t seed = 0;
  int verbose = 0;
  bool quiet = false;
};

struct SynthArgs {
  fs::path out;
  SynthSpec spec;
};

struct TrainArgs {
  fs::path scene;
  fs::path out;
  fs::path log;
  TrainConfig config;
  bool no_lr_scaling = false;
  int log_every = 500;
  std::vector<float> background{0.0f, 0.0f, 0.0f};
};

struct SelectArgs {
  fs::path ckpt;
  std::string ids;
  float threshold = kDefaultThreshold;
  int outlier_k = kDefaultOutlierNeighbors;
  float outlier_std = kDefaultOutlierStd;
  fs::path save;
};

struct StylizeArgs {
  fs::path ckpt;
  fs::path scene;
  fs::path out;
  fs::path style;
  fs::path weights;
  fs::path log;
  std::string ids;
  float threshold = kDefaultThreshold;
  int outlier_k = kDefaultOutlierNeighbors;
  float outlier_std = kDefaultOutlierStd;
  StyleJob job;
  std::vector<float> background{0.0f, 0.0f, 0.0f};
};

struct RenderArgs {
  fs::path ckpt;
  fs::path scene;
  fs::path out;
  std::optional<int> camera_index;
  int orbit = 0;
  bool id_maps = false;
  std::vector<float> background{0.0f, 0.0f, 0.0f};
};

Vec3 to_vec3(const std::vector<float>& v) { return {v[0], v[1], v[2]}; }

void setup_logging(const Globals& g) {
  auto logger = spdlog::stderr_logger_mt("splatkit");
  logger->set_pattern("[%L] %v");
  spdlog::set_default_logger(logger);
  if (g.quiet) {
    spdlog::set_level(spdlog::level::warn);
  } else {
    spdlog::set_level(g.verbose > 0 ? spdlog::level::debug : spdlog::level::info);
  }
}

void write_jsonl(std::ofstream& out, const json& record) { out << record.dump() << '\n'; }

std::ofstream open_log(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write log file {}", path.string()));
  return out;
}

fs::path default_log(const fs::path& out) {
  fs::path p = out;
  p += ".log.jsonl";
  return p;
}

// ---------------------------------------------------------------- commands

void cmd_synth(const SynthArgs& a, const Globals& g) {
  SynthSpec spec = a.spec;
  spec.seed = g.seed;
  const SynthScene scene = generate_synth(spec, a.out);
  spdlog::info("wrote {} frames, {} Gaussians, {} classes to {}", scene.cameras.size(),
               scene.gaussians.size(), scene.num_classes(), a.out.string());
}

void cmd_train(const TrainArgs& a, const Globals& g) {
  TrainConfig config = a.config;
  config.seed = g.seed;
  config.scale_position_lr = !a.no_lr_scaling;
  config.background = to_vec3(a.background);
  config.validate();

  const SceneData scene = load_scene(a.scene);
  for (const auto& w : scene.warnings) spdlog::warn("{}", w);
  spdlog::info("scene {}: {} frames {}x{}, masks: {}", scene.name, scene.frames.size(),
               scene.width, scene.height, scene.has_masks() ? "yes" : "no");

  std::ofstream log = open_log(a.log.empty() ? default_log(a.out) : a.log);
  TrainHooks hooks;
  hooks.on_log = [&](const TrainLogRecord& r) {
    write_jsonl(log, {{"iteration", r.iteration},
                      {"view", r.view},
                      {"photometric", r.photometric},
                      {"cross_entropy", r.cross_entropy},
                      {"spatial", r.spatial},
                      {"total", r.total},
                      {"seconds", r.seconds}});
    if (a.log_every > 0 && (r.iteration % a.log_every == 0 || r.iteration == 1)) {
      spdlog::info("iter {:>6}  l1 {:.5f}  ce {:.5f}  3d {:.5f}  ({:.1f}s)", r.iteration,
                   r.photometric, r.cross_entropy, r.spatial, r.seconds);
    }
  };
  hooks.on_snapshot = [&](int it, const GaussianSet& gs, const Classifier& cls) {
    fs::path p = a.out;
    p += fmt::format(".iter{:06d}", it);
    save_checkpoint(p, Checkpoint{kCheckpointVersion, gs, cls, {static_cast<std::uint64_t>(it), config.seed, config.hash()}});
    spdlog::debug("snapshot {}", p.string());
  };

  TrainResult result = train(scene, config, hooks);
  Checkpoint ckpt{kCheckpointVersion, std::move(result.gaussians), std::move(result.classifier),
                  result.metadata};
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_checkpoint(a.out, ckpt);
  spdlog::info("wrote {} ({} Gaussians)", a.out.string(), ckpt.gaussians.size());
}

ObjectSelection run_selection(const Checkpoint& ckpt, const std::string& ids, float threshold,
                              int k, float std_factor) {
  if (ckpt.classifier.num_classes == 0) {
    throw DataError("checkpoint has no classifier (trained without masks)");
  }
  const std::vector<int> object_ids = parse_id_list(ids);
  return select_object(ckpt.gaussians, ckpt.classifier, object_ids, threshold, k, std_factor);
}

void print_selection(const ObjectSelection& s, std::size_t total, float threshold, int k,
                     float std_factor) {
  fmt::print("gaussians          {}\n", total);
  fmt::print("threshold          {:.3f}\n", threshold);
  for (std::size_t i = 0; i < s.object_ids.size(); ++i) {
    fmt::print("  id {:<4}          {}\n", s.object_ids[i], s.per_id_counts[i]);
  }
  fmt::print("passed threshold   {}\n", s.passed_threshold);
  fmt::print("below threshold    {}\n", s.filtered_by_threshold);
  if (s.outlier_removal_skipped) {
    fmt::print("outlier removal    skipped (needs more than {} points)\n", k);
  } else {
    fmt::print("outliers removed   {} (k={}, std={})\n", s.removed_as_outliers, k, std_factor);
  }
  fmt::print("selected           {}\n", s.indices.size());
}

void cmd_select(const SelectArgs& a, const Globals&) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const ObjectSelection s = run_selection(ckpt, a.ids, a.threshold, a.outlier_k, a.outlier_std);
  print_selection(s, ckpt.gaussians.size(), a.threshold, a.outlier_k, a.outlier_std);
  if (s.empty_warning) spdlog::warn("selection is empty");
  if (!a.save.empty()) {
    const json doc{{"object_ids", s.object_ids},
                   {"threshold", a.threshold},
                   {"outlier_k", a.outlier_k},
                   {"outlier_std", a.outlier_std},
                   {"indices", s.indices}};
    std::ofstream out(a.save);
    if (!out) throw DataError(fmt::format("cannot write {}", a.save.string()));
    out << doc.dump(2) << '\n';
  }
}

std::vector<Camera> scene_cameras(const SceneData& scene) {
  std::vector<Camera> cams;
  for (const auto& f : scene.frames) cams.push_back(f.camera);
  return cams;
}

void cmd_stylize(const StylizeArgs& a, const Globals& g) {
  Checkpoint ckpt = load_checkpoint(a.ckpt);
  const SceneData scene = load_scene(a.scene);
  StyleJob job = a.job;
  job.seed = g.seed;
  job.background = to_vec3(a.background);
  job.validate();
  job.style = load_image(a.style);

  const ObjectSelection sel = run_selection(ckpt, a.ids, a.threshold, a.outlier_k, a.outlier_std);
  spdlog::info("selected {} of {} Gaussians ({} below threshold {:.3f}, {} outliers removed)",
               sel.indices.size(), ckpt.gaussians.size(), sel.filtered_by_threshold, a.threshold,
               sel.removed_as_outliers);
  job.selection = sel.indices;
  if (job.selection.empty()) throw DataError("selection is empty; nothing to stylize");

  const FeatureExtractor extractor =
      a.weights.empty() ? FeatureExtractor::random(g.seed) : FeatureExtractor::load(a.weights);
  if (a.weights.empty()) spdlog::warn("no --weights given; using seeded random VGG-16 weights");

  std::ofstream log = open_log(a.log.empty() ? default_log(a.out) : a.log);
  const auto cams = scene_cameras(scene);
  StyleResult result = stylize(ckpt.gaussians, cams, job, extractor);
  for (const auto& r : result.log) {
    write_jsonl(log, {{"iteration", r.iteration}, {"view", r.view}, {"layers", job.layers},
                      {"per_layer", r.per_layer}, {"total", r.total}});
  }
  spdlog::info("views {}; loss {:.4f} -> {:.4f}", fmt::join(result.views, ","),
               result.log.front().total, result.log.back().total);
  ckpt.gaussians = std::move(result.gaussians);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_checkpoint(a.out, ckpt);
  spdlog::info("wrote {}", a.out.string());
}

// Orbit around the point closest to every camera's optical axis, at the
// mean height and horizontal distance of the input cameras.
std::vector<Camera> orbit_cameras(const std::vector<Camera>& cams, int n) {
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero(), up = Vec3::Zero();
  for (const auto& c : cams) {
    const Mat3 r = c.rotation();
    const Vec3 d = r.row(2).transpose();
    const Mat3 p = Mat3::Identity() - d * d.transpose();
    a += p;
    b += p * c.center();
    up -= r.row(1).transpose();
  }
  up.normalize();
  const Vec3 target = a.ldlt().solve(b);
  Vec3 e1 = cams.front().center() - target;
  e1 -= e1.dot(up) * up;
  e1.normalize();
  const Vec3 e2 = up.cross(e1);
  float height = 0.0f, radius = 0.0f;
  for (const auto& c : cams) {
    const Vec3 o = c.center() - target;
    height += o.dot(up);
    radius += (o - o.dot(up) * up).norm();
  }
  height /= static_cast<float>(cams.size());
  radius /= static_cast<float>(cams.size());
  const Camera& ref = cams.front();
  std::vector<Camera> out;
  for (int i = 0; i < n; ++i) {
    const float t = 2.0f * std::numbers::pi_v<float> * static_cast<float>(i) / static_cast<float>(n);
    const Vec3 eye = target + radius * (std::cos(t) * e1 + std::sin(t) * e2) + height * up;
    out.push_back(Camera::look_at(eye, target, up, ref.width, ref.height, ref.fx));
  }
  return out;
}

void save_render(const fs::path& path, const RenderOutput& r) {
  Image img(r.width, r.height);
  img.rgb = r.color;
  save_image(path, img);
}

void cmd_render(const RenderArgs& a, const Globals&) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const SceneData scene = load_scene(a.scene);
  const auto cams = scene_cameras(scene);
  const Vec3 bg = to_vec3(a.background);
  fs::create_directories(a.out);
  if (a.id_maps && ckpt.classifier.num_classes == 0) {
    throw DataError("--id-maps needs a checkpoint with a classifier");
  }

  if (a.orbit > 0) {
    const auto orbit = orbit_cameras(cams, a.orbit);
    for (int i = 0; i < a.orbit; ++i) {
      save_render(a.out / fmt::format("orbit_{:04d}.png", i), render_color(ckpt.gaussians, orbit[i], bg));
    }
    spdlog::info("wrote {} orbit frames to {}", a.orbit, a.out.string());
    return;
  }

  std::vector<int> which;
  if (a.camera_index) {
    if (*a.camera_index < 0 || *a.camera_index >= static_cast<int>(cams.size())) {
      throw InvalidArgument(fmt::format("camera index {} outside [0, {})", *a.camera_index, cams.size()));
    }
    which.push_back(*a.camera_index);
  } else {
    for (int i = 0; i < static_cast<int>(cams.size()); ++i) which.push_back(i);
  }
  for (int i : which) {
    const RenderOutput r = render_color(ckpt.gaussians, cams[i], bg);
    save_render(a.out / fmt::format("view_{:04d}.png", i), r);
    Image img(r.width, r.height);
    img.rgb = r.color;
    spdlog::info("view {:>3} ({})  psnr {:.2f} dB", i, scene.frames[i].name,
                 psnr(img, load_image(scene.frames[i].image_path)));
    if (a.id_maps) {
      IdMap ids{r.width, r.height, render_id_map(ckpt.gaussians, cams[i], ckpt.classifier)};
      save_mask(a.out / fmt::format("ids_{:04d}.png", i), ids);
    }
  }
}

// ---------------------------------------------------------------- parser

CLI::Option* add_background(CLI::App* sub, std::vector<float>& bg) {
  return sub->add_option("--background", bg, "Background color r,g,b")
      ->expected(3)
      ->delimiter(',')
      ->check(CLI::Range(0.0f, 1.0f));
}

// Globals plus the active subcommand; the output is valid --config input.
void print_resolved_config(const CLI::App& app) {
  const std::string active = app.get_subcommands().front()->get_name() + ".";
  std::istringstream lines(app.config_to_str(true, false));
  std::string out = "# resolved config\n";
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    if (dot < eq && line.compare(0, active.size(), active) != 0) continue;
    out += line + '\n';
  }
  fmt::print(stderr, "{}", out);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Gaussian splatting reconstruction, object selection and localized stylization",
               "splatkit"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML file merged under command-line flags");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Global seed");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic scene directory");
  s->add_option("--out", synth.out, "Output scene directory")->required();
  s->add_option("--objects", synth.spec.objects, "Objects in the scene")->check(CLI::Range(1, 255));
  s->add_option("--gaussians-per-object", synth.spec.gaussians_per_object)->check(CLI::Range(1, 100000));
  s->add_option("--background-gaussians", synth.spec.background_gaussians)->check(CLI::Range(0, 1000000));
  s->add_option("--cluster-radius", synth.spec.cluster_radius)->check(CLI::PositiveNumber);
  s->add_option("--cameras", synth.spec.cameras)->check(CLI::Range(1, 10000));
  s->add_option("--ring-radius", synth.spec.ring_radius)->check(CLI::PositiveNumber);
  s->add_option("--elevation", synth.spec.elevation_deg, "Camera elevation in degrees")->check(CLI::Range(-89.0f, 89.0f));
  s->add_option("--image-size", synth.spec.image_size, "Square image side in pixels")->check(CLI::Range(8, 4096));
  s->add_option("--sh-degree", synth.spec.sh_degree)->check(CLI::Range(0, 3));
  s->add_option("--perturbation", synth.spec.perturbation, "Initial point cloud jitter (scene-extent fraction)")->check(CLI::Range(0.0f, 1.0f));
  s->add_option("--mask-noise", synth.spec.mask_noise, "Per-pixel ID flip rate")->check(CLI::Range(0.0f, 1.0f));

  TrainArgs train_args;
  TrainConfig& tc = train_args.config;
  auto* t = app.add_subcommand("train", "Jointly reconstruct and segment a scene");
  t->add_option("--scene", train_args.scene, "Scene directory")->required();
  t->add_option("--out", train_args.out, "Output checkpoint")->required();
  t->add_option("--iters", tc.iterations, "Training iterations")->check(CLI::Range(1, 10000000));
  t->add_option("--lambda-ce", tc.lambda_ce, "Identity cross-entropy weight")->check(CLI::NonNegativeNumber);
  t->add_option("--lambda-3d", tc.lambda_3d, "Spatial consistency weight")->check(CLI::NonNegativeNumber);
  t->add_option("--knn", tc.knn, "Neighbors in the spatial term")->check(CLI::Range(1, 256));
  t->add_option("--sample-size", tc.sample_size, "Gaussians sampled for the spatial term")->check(CLI::Range(1, 1000000));
  t->add_option("--sh-degree", tc.sh_degree)->check(CLI::Range(0, 3));
  t->add_option("--lr-position", tc.lr.positions);
  t->add_option("--lr-rotation", tc.lr.rotations);
  t->add_option("--lr-scale", tc.lr.log_scales);
  t->add_option("--lr-opacity", tc.lr.opacity);
  t->add_option("--lr-sh-dc", tc.lr.sh_dc);
  t->add_option("--lr-sh-rest", tc.lr.sh_rest);
  t->add_option("--lr-id", tc.lr.id_features);
  t->add_option("--lr-classifier", tc.lr.classifier);
  t->add_flag("--no-lr-scaling", train_args.no_lr_scaling, "Do not scale the position rate by the camera extent");
  t->add_option("--snapshot-every", tc.snapshot_every, "Write <out>.iterNNNNNN every N iterations (0 = off)")->check(CLI::NonNegativeNumber);
  t->add_option("--prune-every", tc.prune_every, "Opacity pruning cadence (0 = off)")->check(CLI::NonNegativeNumber);
  t->add_option("--prune-opacity", tc.prune_opacity)->check(CLI::Range(0.0f, 1.0f));
  t->add_option("--log", train_args.log, "Loss log (JSON lines); default <out>.log.jsonl");
  t->add_option("--log-every", train_args.log_every, "Progress line cadence")->check(CLI::NonNegativeNumber);
  add_background(t, train_args.background);

  SelectArgs sel;
  auto* se = app.add_subcommand("select", "Report the Gaussians selected for object IDs");
  se->add_option("--ckpt", sel.ckpt, "Trained checkpoint")->required();
  se->add_option("--object-ids", sel.ids, "Comma-separated object IDs")->required();
  se->add_option("--threshold", sel.threshold, "Class probability threshold")->check(CLI::Range(0.0f, 1.0f));
  se->add_option("--outlier-k", sel.outlier_k, "Neighbors for outlier removal")->check(CLI::Range(1, 1000));
  se->add_option("--outlier-std", sel.outlier_std, "Std multiple for outlier removal");
  se->add_option("--save", sel.save, "Write the selection as JSON");

  StylizeArgs sty;
  auto* st = app.add_subcommand("stylize", "Stylize the SH colors of selected objects");
  st->add_option("--ckpt", sty.ckpt, "Trained checkpoint")->required();
  st->add_option("--scene", sty.scene, "Scene directory (cameras)")->required();
  st->add_option("--out", sty.out, "Output checkpoint")->required();
  st->add_option("--object-ids", sty.ids, "Comma-separated object IDs")->required();
  st->add_option("--style", sty.style, "Style image (PNG)")->required();
  st->add_option("--layers", sty.job.layers, "Feature layers")->delimiter(',')->check(CLI::Range(0, 30));
  st->add_option("--style-scale", sty.job.style_scale, "Style image resize factor")->check(CLI::Range(0.0f, 1.0f));
  st->add_option("--lr", sty.job.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  st->add_option("--iters", sty.job.iterations, "Style iterations")->check(CLI::Range(1, 10000));
  st->add_option("--views-frac", sty.job.view_fraction, "Fraction of views used")->check(CLI::Range(0.0f, 1.0f));
  st->add_option("--weights", sty.weights, "Feature extractor weights (FNET); seeded random if absent");
  st->add_option("--threshold", sty.threshold)->check(CLI::Range(0.0f, 1.0f));
  st->add_option("--outlier-k", sty.outlier_k)->check(CLI::Range(1, 1000));
  st->add_option("--outlier-std", sty.outlier_std);
  st->add_option("--content-weight", sty.job.content_weight, "L1 weight toward the original renders")->check(CLI::NonNegativeNumber);
  st->add_flag("--raw-dot", sty.job.raw_dot, "Raw dot product instead of cosine in the style loss");
  st->add_flag("--isolate", sty.job.isolate_selection, "Render non-selected Gaussians as background while optimizing");
  st->add_option("--log", sty.log, "Loss log (JSON lines); default <out>.log.jsonl");
  add_background(st, sty.background);

  RenderArgs ren;
  auto* r = app.add_subcommand("render", "Render a checkpoint to PNG files");
  r->add_option("--ckpt", ren.ckpt, "Checkpoint")->required();
  r->add_option("--scene", ren.scene, "Scene directory (cameras)")->required();
  r->add_option("--out", ren.out, "Output directory")->required();
  auto* ci = r->add_option("--camera-index", ren.camera_index, "Render one training view");
  r->add_option("--orbit", ren.orbit, "Render N frames on an orbit")->check(CLI::Range(1, 100000))->excludes(ci);
  r->add_flag("--id-maps", ren.id_maps, "Also write classified ID maps");
  add_background(r, ren.background);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  spdlog::drop("splatkit");
  setup_logging(g);
  omp_set_num_threads(g.threads);
  if (!g.quiet) print_resolved_config(app);

  try {
    if (*s) cmd_synth(synth, g);
    if (*t) cmd_train(train_args, g);
    if (*se) cmd_select(sel, g);
    if (*st) cmd_stylize(sty, g);
    if (*r) cmd_render(ren, g);
  } catch (const DivergenceError& e) {
    spdlog::error("diverged: {}", e.what());
    return kExitDivergence;
  } catch (const InvalidArgument& e) {
    spdlog::error("invalid argument: {}", e.what());
    return kExitData;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace splat::cli
