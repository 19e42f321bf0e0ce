// SPDX-License-Identifier: Apache-2.0
//
// kinesplat CLI: render / train / fit-tracks / ablate / bench / gen.
// Successful runs exit 0; failures print a one-line JSON error document to
// stdout and exit nonzero.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "kinesplat/harness.hpp"
#include "kinesplat/image_io.hpp"
#include "kinesplat/metrics.hpp"
#include "kinesplat/parallel.hpp"
#include "kinesplat/scene_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kinesplat;

namespace {

struct Modalities {
  bool rgb = true;
  bool semantic = false;
  bool depth = false;
  bool flow = false;
};

Modalities parse_modalities(const std::string& spec) {
  Modalities m;
  m.rgb = false;
  std::string token;
  std::stringstream ss(spec);
  while (std::getline(ss, token, ',')) {
    if (token == "rgb") m.rgb = true;
    else if (token == "sem" || token == "semantic") m.semantic = true;
    else if (token == "depth") m.depth = true;
    else if (token == "flow") m.flow = true;
    else throw std::invalid_argument("unknown modality: " + token);
  }
  return m;
}

std::string frame_name(const std::string& dir, int f, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d", f);
  return dir + "/" + buf + suffix;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

json rows_to_json(const std::vector<MetricRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json row{{"name", r.name}};
    for (const auto& [k, v] : r.values) row[k] = v;
    arr.push_back(std::move(row));
  }
  return arr;
}

// Observation documents are track JSONs without the velocity field:
// timestamps, states [[x, y, theta]...], heights, optional valid flags.
NoisyBoxTrack load_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observations: " + path);
  const json j = json::parse(in);
  NoisyBoxTrack obs;
  for (const auto& t : j.at("timestamps")) obs.timestamps.push_back(t.get<double>());
  for (const auto& s : j.at("states"))
    obs.obs.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
  for (const auto& h : j.at("heights")) obs.heights.push_back(h.get<double>());
  if (j.contains("valid"))
    for (const auto& v : j["valid"]) obs.valid.push_back(v.get<bool>() ? 1 : 0);
  if (obs.timestamps.size() != obs.obs.size() || obs.timestamps.size() != obs.heights.size())
    throw std::invalid_argument("observations: array length mismatch");
  return obs;
}

void save_observations(const std::string& path, const NoisyBoxTrack& obs) {
  json states = json::array(), valid = json::array();
  for (const auto& s : obs.obs) states.push_back(json::array({s.x, s.y, s.theta}));
  for (std::size_t i = 0; i < obs.obs.size(); ++i) valid.push_back(obs.is_valid(i));
  write_json(path, json{{"timestamps", obs.timestamps},
                        {"states", states},
                        {"heights", obs.heights},
                        {"valid", valid}});
}

int cmd_render(const std::string& scene_path, const std::string& cameras_path,
               const std::string& out_dir, const std::string& modalities, bool exposure,
               int threads) {
  const SceneGraph scene = load_scene(scene_path);
  const std::vector<FrameCamera> cams = load_cameras(cameras_path);
  const Modalities m = parse_modalities(modalities);
  fs::create_directories(out_dir);

  RenderOptions opt;
  opt.rgb = m.rgb;
  opt.semantic = m.semantic;
  opt.depth = m.depth;
  opt.exposure = exposure;
  opt.threads = threads;

  for (std::size_t i = 0; i < cams.size(); ++i) {
    RenderOptions o = opt;
    o.flow = m.flow && i + 1 < cams.size();
    const RenderResult res =
        render(scene, cams[i], o.flow ? &cams[i + 1] : nullptr, o);
    const int f = static_cast<int>(i);
    if (m.rgb) {
      const RasterD& c = exposure ? res.buffers.color_exposed : res.buffers.color;
      write_ppm(frame_name(out_dir, f, "_rgb.ppm"), c);
      write_fras(frame_name(out_dir, f, "_rgb.fras"), c);
    }
    if (m.semantic) write_fras(frame_name(out_dir, f, "_semantic.fras"), res.buffers.semantic);
    if (m.depth) write_fras(frame_name(out_dir, f, "_depth.fras"), res.buffers.depth);
    if (o.flow) write_fras(frame_name(out_dir, f, "_flow.fras"), res.buffers.flow);
    write_fras(frame_name(out_dir, f, "_accum.fras"), res.buffers.accum_alpha);
  }
  std::cout << json{{"frames", cams.size()}, {"out", out_dir}}.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (cfg.output_dir.empty()) cfg.output_dir = "train_out";
  fs::create_directories(cfg.output_dir);
  save_experiment_config(cfg.output_dir + "/config_echo.json", cfg);

  const GroundTruth gt = gen_scene(cfg);
  const PseudoGt pgt = gen_pseudo_gt(gt, cfg);
  const SceneGraph init = corrupt_scene(gt, cfg.noise, cfg.seed + 101);
  const int threads = cfg.resolved_threads();
  const TrainResult result =
      train_scene(init, gt.cameras, gt.train_frames, pgt, cfg.train, threads);

  RenderOptions eval_opt;
  eval_opt.rgb = true;
  eval_opt.depth = true;
  eval_opt.threads = threads;
  double psnr = 0.0, ssim_sum = 0.0, rmse = 0.0;
  for (std::size_t i = 0; i < gt.test_frames.size(); ++i) {
    const int f = gt.test_frames[i];
    const RenderResult res =
        render(result.scene, result.cameras[static_cast<std::size_t>(f)], nullptr, eval_opt);
    const RasterD& clean = pgt.clean_image[static_cast<std::size_t>(f)];
    psnr += metric_psnr(res.buffers.color, clean);
    ssim_sum += metric_ssim(res.buffers.color, clean);
    std::vector<std::uint8_t> mask(clean.v.size() / 3, 0);
    const RasterD& acc = pgt.clean_accum[static_cast<std::size_t>(f)];
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = acc.v[p] > 0.5 ? 1 : 0;
    rmse += metric_depth_rmse(res.buffers.depth, pgt.clean_depth[static_cast<std::size_t>(f)],
                              mask);
    if (i < 4) write_ppm(frame_name(cfg.output_dir, f, "_heldout.ppm"), res.buffers.color);
  }
  const double n = static_cast<double>(gt.test_frames.size());

  for (std::size_t o = 0; o < result.scene.objects.size(); ++o)
    save_track(cfg.output_dir + "/track_" + std::to_string(o) + ".json",
               result.scene.objects[o].track);
  save_scene(cfg.output_dir + "/scene_trained.json", result.scene);

  json metrics{{"heldout_psnr", psnr / n},
               {"heldout_ssim", ssim_sum / n},
               {"heldout_depth_rmse", rmse / n},
               {"loss_first", result.loss_history.front()},
               {"loss_last", result.loss_history.back()},
               {"iterations", cfg.train.iterations}};
  write_json(cfg.output_dir + "/metrics.json", metrics);
  std::cout << metrics.dump() << "\n";
  return 0;
}

int cmd_fit_tracks(const std::string& obs_path, const std::string& mode,
                   const std::string& method, int iterations, const std::string& out_path) {
  const NoisyBoxTrack obs = load_observations(obs_path);
  FitOptions opt;
  if (mode == "none") opt.mode = FitMode::kNone;
  else if (mode == "per_frame") opt.mode = FitMode::kPerFrame;
  else if (mode == "unicycle") opt.mode = FitMode::kUnicycle;
  else throw std::invalid_argument("unknown mode: " + mode);
  if (method == "gd") opt.method = FitMethod::kGradientDescent;
  else if (method == "gn") opt.method = FitMethod::kGaussNewton;
  else throw std::invalid_argument("unknown method: " + method);
  if (iterations > 0) opt.iterations = iterations;

  const UnicycleTrack fitted = fit_track(obs, opt);
  const std::string out =
      out_path.empty() ? obs_path.substr(0, obs_path.find_last_of('.')) + ".rectified.json"
                       : out_path;
  save_track(out, fitted);

  json summary{{"out", out},
               {"loss_track", loss_track(fitted, obs)},
               {"loss_unicycle", loss_unicycle(fitted)},
               {"loss_smooth", loss_smooth(fitted)}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_ablate(const std::string& name, const std::string& config_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  const std::vector<MetricRow> rows = run_ablation(name, cfg);
  const json doc{{"ablation", name}, {"rows", rows_to_json(rows)}};
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    save_experiment_config(cfg.output_dir + "/config_echo.json", cfg);
    write_json(cfg.output_dir + "/metrics.json", doc);
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const BenchReport r = run_bench(cfg);
  json doc{{"splats", r.splats},
           {"width", r.width},
           {"height", r.height},
           {"reps", r.reps},
           {"stages_ms",
            {{"project_bin", r.project_ms},
             {"rgb", r.rgb_ms},
             {"affine", r.affine_ms},
             {"semantic", r.semantic_ms},
             {"flow", r.flow_ms}}},
           {"fps_full", r.fps_full},
           {"tiled_ms", r.tiled_ms},
           {"brute_ms", r.brute_ms},
           {"speedup", r.speedup},
           {"max_dev", r.max_dev}};
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    write_json(cfg.output_dir + "/bench.json", doc);
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_gen(const std::string& config_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (cfg.output_dir.empty()) cfg.output_dir = "gen_out";
  fs::create_directories(cfg.output_dir);
  save_experiment_config(cfg.output_dir + "/config_echo.json", cfg);

  const GroundTruth gt = gen_scene(cfg);
  const PseudoGt pgt = gen_pseudo_gt(gt, cfg);
  save_scene(cfg.output_dir + "/scene.json", gt.scene);
  save_cameras(cfg.output_dir + "/cameras.json", gt.cameras);
  for (std::size_t o = 0; o < pgt.boxes.size(); ++o)
    save_observations(cfg.output_dir + "/boxes_" + std::to_string(o) + ".json", pgt.boxes[o]);

  const std::string frames = cfg.output_dir + "/frames";
  fs::create_directories(frames);
  for (std::size_t f = 0; f < pgt.targets.size(); ++f) {
    const FrameTargets& tg = pgt.targets[f];
    const int fi = static_cast<int>(f);
    write_ppm(frame_name(frames, fi, "_rgb.ppm"), tg.image);
    write_fras(frame_name(frames, fi, "_rgb.fras"), tg.image);
    if (!tg.semantic.empty())
      write_fras(frame_name(frames, fi, "_semantic.fras"), tg.semantic);
    if (tg.has_flow) write_fras(frame_name(frames, fi, "_flow.fras"), tg.flow);
    write_fras(frame_name(frames, fi, "_depth.fras"), pgt.clean_depth[f]);
  }
  std::cout << json{{"frames", pgt.targets.size()},
                    {"objects", pgt.boxes.size()},
                    {"out", cfg.output_dir}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal Gaussian splatting engine with kinematic track rectification"};
  app.require_subcommand(1);

  std::string scene_path, cameras_path, out_dir = "render_out";
  std::string modalities = "rgb";
  bool exposure = false;
  int threads = 0;
  auto* render_cmd = app.add_subcommand("render", "Render a scene along a camera path");
  render_cmd->add_option("scene", scene_path, "Scene JSON")->required();
  render_cmd->add_option("cameras", cameras_path, "Camera list JSON")->required();
  render_cmd->add_option("--out", out_dir, "Output directory");
  render_cmd->add_option("--modalities", modalities, "Comma list: rgb,sem,depth,flow");
  render_cmd->add_flag("--exposure", exposure, "Apply per-frame affine color correction");
  render_cmd->add_option("--threads", threads, "Worker threads (0 = hardware)");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Run a training experiment from a config");
  train_cmd->add_option("config", train_config, "Experiment config JSON")->required();

  std::string obs_path, fit_mode = "unicycle", fit_method = "gd", fit_out;
  int fit_iters = 0;
  auto* fit_cmd = app.add_subcommand("fit-tracks", "Rectify noisy box observations");
  fit_cmd->add_option("track", obs_path, "Observations JSON")->required();
  fit_cmd->add_option("--mode", fit_mode, "none | per_frame | unicycle");
  fit_cmd->add_option("--method", fit_method, "gd | gn");
  fit_cmd->add_option("--iterations", fit_iters, "Override iteration count");
  fit_cmd->add_option("--out", fit_out, "Rectified track output path");

  std::string ablate_name, ablate_config;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run a named study");
  ablate_cmd->add_option("name", ablate_name, "dynamic_noise | static_losses | softmax3d | exposure")
      ->required();
  ablate_cmd->add_option("config", ablate_config, "Experiment config JSON")->required();

  std::string bench_config;
  auto* bench_cmd = app.add_subcommand("bench", "Time the render pipeline stages");
  bench_cmd->add_option("config", bench_config, "Experiment config JSON")->required();

  std::string gen_config;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a scene and pseudo-ground-truth corpus");
  gen_cmd->add_option("config", gen_config, "Experiment config JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (render_cmd->parsed()) {
      const int th = threads > 0 ? threads : default_thread_count();
      return cmd_render(scene_path, cameras_path, out_dir, modalities, exposure, th);
    }
    if (train_cmd->parsed()) return cmd_train(train_config);
    if (fit_cmd->parsed())
      return cmd_fit_tracks(obs_path, fit_mode, fit_method, fit_iters, fit_out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_name, ablate_config);
    if (bench_cmd->parsed()) return cmd_bench(bench_config);
    if (gen_cmd->parsed()) return cmd_gen(gen_config);
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
