// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kinesplat/harness.hpp"
#include "kinesplat/metrics.hpp"
#include "test_util.hpp"

using namespace kinesplat;

namespace {

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.width = 96;
  cfg.height = 72;
  cfg.threads = 2;
  cfg.camera.frames = 8;
  cfg.scene.static_gaussians = 400;
  cfg.scene.class_count = 4;
  cfg.scene.sh_degree = 1;
  ObjectMotionConfig obj;
  obj.gaussians = 40;
  // Heading samples land on exactly representable values so the smoothness
  // term is identically zero on the clean trajectory, not merely tiny.
  obj.theta0 = 0.25;
  obj.omega = 0.03125;
  obj.v = 0.5;
  cfg.scene.objects.push_back(obj);
  return cfg;
}

int argmax_at(const RasterD& r, int y, int x) {
  int best = 0;
  for (int k = 1; k < r.c; ++k) {
    if (r.at(y, x, k) > r.at(y, x, best)) best = k;
  }
  return best;
}

std::string temp_file(const std::string& name) {
  static const std::filesystem::path dir = [] {
    std::random_device rd;
    auto p = std::filesystem::temp_directory_path() /
             ("kinesplat_harness_" + std::to_string(rd()));
    std::filesystem::create_directories(p);
    return p;
  }();
  return (dir / name).string();
}

}  // namespace

TEST_CASE("scene generation is deterministic and kinematically exact") {
  const ExperimentConfig cfg = small_config(7);
  const GroundTruth a = gen_scene(cfg);
  const GroundTruth b = gen_scene(cfg);

  REQUIRE(a.scene.static_gaussians.size() == 400);
  REQUIRE(a.scene.objects.size() == 1);
  REQUIRE(a.cameras.size() == 8);
  REQUIRE(a.static_labels.size() == a.scene.static_gaussians.size());
  CHECK(a.train_frames == std::vector<int>{0, 2, 4, 6});
  CHECK(a.test_frames == std::vector<int>{1, 3, 5, 7});

  CHECK(a.scene.static_gaussians.size() == b.scene.static_gaussians.size());
  for (std::size_t i = 0; i < a.scene.static_gaussians.size(); i += 37) {
    CHECK((a.scene.static_gaussians[i].mu - b.scene.static_gaussians[i].mu)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(a.scene.static_gaussians[i].opacity_logit ==
          b.scene.static_gaussians[i].opacity_logit);
  }
  const UnicycleTrack& ta = a.scene.objects[0].track;
  const UnicycleTrack& tb = b.scene.objects[0].track;
  REQUIRE(ta.states.size() == 8);
  for (std::size_t k = 0; k < ta.states.size(); ++k) {
    CHECK(ta.states[k].x == tb.states[k].x);
    CHECK(ta.states[k].theta == tb.states[k].theta);
  }
  for (std::size_t f = 0; f < a.cameras.size(); ++f) {
    CHECK((a.cameras[f].R - b.cameras[f].R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.cameras[f].t - b.cameras[f].t).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.cameras[f].exposure_A - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
  }

  // Generated trajectories satisfy their own kinematic residual exactly.
  CHECK(loss_unicycle(ta) < 1e-12);
  CHECK(loss_smooth(ta) == 0.0);

  ExperimentConfig bad = cfg;
  bad.scene.class_count = 3;
  CHECK_THROWS_AS(gen_scene(bad), std::invalid_argument);
}

TEST_CASE("a default configuration carries no dynamic objects") {
  ExperimentConfig cfg;
  cfg.width = 48;
  cfg.height = 36;
  cfg.camera.frames = 3;
  cfg.scene.static_gaussians = 60;
  cfg.threads = 1;
  const GroundTruth gt = gen_scene(cfg);
  CHECK(gt.scene.objects.empty());

  const PseudoGt pgt = gen_pseudo_gt(gt, cfg);
  CHECK(pgt.boxes.empty());
  REQUIRE(pgt.targets.size() == 3);
  CHECK(pgt.targets[0].has_flow);
  CHECK_FALSE(pgt.targets[2].has_flow);
}

TEST_CASE("noise-free pseudo ground truth equals the clean renders bit for bit") {
  const ExperimentConfig cfg = small_config(9);
  const GroundTruth gt = gen_scene(cfg);
  const PseudoGt p1 = gen_pseudo_gt(gt, cfg);
  const PseudoGt p2 = gen_pseudo_gt(gt, cfg);

  REQUIRE(p1.targets.size() == 8);
  for (std::size_t f = 0; f < p1.targets.size(); ++f) {
    CHECK(testutil::raster_max_dev(p1.targets[f].image, p1.clean_image[f]) == 0.0);
    CHECK(testutil::raster_max_dev(p1.targets[f].image, p2.targets[f].image) == 0.0);
    if (p1.targets[f].has_flow) {
      CHECK(testutil::raster_max_dev(p1.targets[f].flow, p2.targets[f].flow) == 0.0);
    }
    // One-hot semantics: every pixel has a single unit entry.
    const RasterD& sem = p1.targets[f].semantic;
    REQUIRE(sem.c == 4);
    for (int y = 0; y < sem.h; y += 9) {
      for (int x = 0; x < sem.w; x += 11) {
        double sum = 0.0;
        for (int k = 0; k < sem.c; ++k) {
          sum += sem.at(y, x, k);
          CHECK((sem.at(y, x, k) == 0.0 || sem.at(y, x, k) == 1.0));
        }
        CHECK(sum == 1.0);
      }
    }
  }

  // Zero-noise boxes coincide with the generating track exactly.
  REQUIRE(p1.boxes.size() == 1);
  const auto& obs = p1.boxes[0];
  const auto& track = gt.scene.objects[0].track;
  REQUIRE(obs.obs.size() == track.states.size());
  for (std::size_t k = 0; k < obs.obs.size(); ++k) {
    CHECK(obs.obs[k].x == track.states[k].x);
    CHECK(obs.obs[k].y == track.states[k].y);
    CHECK(obs.obs[k].theta == track.states[k].theta);
    CHECK(obs.heights[k] == track.heights[k]);
  }
}

TEST_CASE("certain label flips change every supervised pixel") {
  const ExperimentConfig clean_cfg = small_config(10);
  ExperimentConfig flip_cfg = clean_cfg;
  flip_cfg.noise.label_flip = 1.0;

  const GroundTruth gt = gen_scene(clean_cfg);
  const PseudoGt clean = gen_pseudo_gt(gt, clean_cfg);
  const PseudoGt flipped = gen_pseudo_gt(gt, flip_cfg);

  const FrameTargets& a = clean.targets[0];
  const FrameTargets& b = flipped.targets[0];
  REQUIRE(a.semantic_mask == b.semantic_mask);
  int masked = 0;
  for (int y = 0; y < a.semantic.h; ++y) {
    for (int x = 0; x < a.semantic.w; ++x) {
      const bool on = a.semantic_mask[static_cast<std::size_t>(y) * a.semantic.w + x] != 0;
      const int la = argmax_at(a.semantic, y, x);
      const int lb = argmax_at(b.semantic, y, x);
      if (on) {
        CHECK(la != lb);
        ++masked;
      } else {
        CHECK(la == lb);
      }
    }
  }
  CHECK(masked > 100);
}

TEST_CASE("synthetic exposure is an exact affine map of the clean render") {
  const ExperimentConfig base = small_config(12);
  ExperimentConfig cfg = base;
  cfg.noise.exposure = true;

  const GroundTruth gt = gen_scene(cfg);
  const PseudoGt pgt = gen_pseudo_gt(gt, cfg);
  REQUIRE(pgt.exposure_A.size() == 8);

  bool some_gain_differs = false;
  for (std::size_t f = 0; f < pgt.targets.size(); ++f) {
    const RasterD& clean = pgt.clean_image[f];
    const RasterD& img = pgt.targets[f].image;
    const Eigen::Matrix3d& A = pgt.exposure_A[f];
    const Eigen::Vector3d& b = pgt.exposure_b[f];
    if (std::abs(A(0, 0) - 1.0) > 0.01) some_gain_differs = true;
    for (int y = 0; y < img.h; y += 7) {
      for (int x = 0; x < img.w; x += 5) {
        for (int c = 0; c < 3; ++c) {
          CHECK(img.at(y, x, c) == A(c, c) * clean.at(y, x, c) + b[c]);
        }
      }
    }
  }
  CHECK(some_gain_differs);
}

TEST_CASE("noise-free observations are a fixed point of every fitting mode") {
  UnicycleTrack gt_track;
  gt_track.timestamps.resize(12);
  gt_track.states.resize(12);
  gt_track.heights.assign(12, 0.5);
  gt_track.states[0] = {1.0, -0.5, 0.25};
  for (int k = 0; k < 12; ++k) gt_track.timestamps[static_cast<std::size_t>(k)] = k;
  for (int k = 0; k + 1 < 12; ++k) {
    gt_track.velocities.push_back(Eigen::Vector2d(0.5, 0.03125));
    gt_track.states[static_cast<std::size_t>(k) + 1] =
        propagate_unicycle(gt_track.states[static_cast<std::size_t>(k)], 0.5, 0.03125, 1.0);
  }

  NoisyBoxTrack obs;
  obs.timestamps = gt_track.timestamps;
  obs.obs = gt_track.states;
  obs.heights = gt_track.heights;

  FitOptions fo;
  fo.mode = FitMode::kNone;
  CHECK(track_errors(fit_track(obs, fo), gt_track).translation == 0.0);

  fo.mode = FitMode::kPerFrame;
  CHECK(track_errors(fit_track(obs, fo), gt_track).translation == 0.0);

  // The coupled objective descends on absolute residuals whose subgradients
  // dither near machine-zero residuals; the decayed step bounds the drift.
  fo.mode = FitMode::kUnicycle;
  fo.iterations = 8000;
  CHECK(track_errors(fit_track(obs, fo), gt_track).translation <= 1e-3);
}

TEST_CASE("training that starts at the ground truth stays there") {
  const ExperimentConfig cfg = small_config(14);
  const GroundTruth gt = gen_scene(cfg);
  const PseudoGt pgt = gen_pseudo_gt(gt, cfg);

  TrainConfig tc;
  tc.iterations = 100;
  tc.loss.image = true;
  tc.loss.flow = true;
  tc.loss.track = true;
  // Semantics stay off: cross entropy is not minimized by the generating
  // scene itself (it keeps pushing probabilities toward the vertex).
  tc.loss.semantic = false;
  tc.loss.depth = false;

  const TrainResult res =
      train_scene(gt.scene, gt.cameras, gt.train_frames, pgt, tc, 2);
  REQUIRE(!res.loss_history.empty());
  INFO("first ", res.loss_history.front(), " last ", res.loss_history.back());
  CHECK(res.loss_history.front() < 1e-9);
  CHECK(res.loss_history.back() < 1e-9);
  CHECK(std::abs(res.loss_history.back() - res.loss_history.front()) < 1e-6);

  // The scene parameters themselves moved at most negligibly.
  const auto& g0 = res.scene.static_gaussians[0];
  const auto& g0_want = gt.scene.static_gaussians[0];
  CHECK((g0.mu - g0_want.mu).norm() < 1e-9);
  const auto& t_fit = res.scene.objects[0].track;
  const auto& t_want = gt.scene.objects[0].track;
  for (std::size_t k = 0; k < t_fit.states.size(); ++k) {
    CHECK(std::abs(t_fit.states[k].x - t_want.states[k].x) < 1e-9);
    CHECK(std::abs(t_fit.states[k].theta - t_want.states[k].theta) < 1e-9);
  }
}

TEST_CASE("the frame objective matches the loss it adapts") {
  const FdSetup s = make_fd_setup(21);
  const FdObjective objective = make_frame_objective(s.targets, s.boxes, s.loss, s.ropt);

  ParamGrads g_direct = ParamGrads::zeros_like(s.scene);
  const double l_direct = frame_loss(s.scene, s.cameras[0], &s.cameras[1], s.targets, s.boxes,
                                     s.loss, s.ropt, &g_direct);

  double l_adapter = 0.0;
  ParamGrads g_adapter = ParamGrads::zeros_like(s.scene);
  objective(s.scene, s.cameras, &l_adapter, &g_adapter);

  CHECK(l_adapter == l_direct);
  ParamGrads diff = g_adapter;
  diff.add_scaled(g_direct, -1.0);
  std::string where;
  CHECK(diff.all_finite(&where));
  // Bit-identical gradients: the adapter may not alter the computation.
  double max_diff = 0.0;
  for (std::size_t i = 0; i < diff.statics.size(); ++i) {
    max_diff = std::max(max_diff, diff.statics[i].mu.cwiseAbs().maxCoeff());
    max_diff = std::max(max_diff, std::abs(diff.statics[i].opacity_logit));
  }
  for (const auto& t : diff.tracks) {
    for (const auto& sv : t.states) max_diff = std::max(max_diff, sv.cwiseAbs().maxCoeff());
  }
  max_diff = std::max(max_diff, diff.camera.exposure_A.cwiseAbs().maxCoeff());
  CHECK(max_diff == 0.0);
}

TEST_CASE("the frame loss is invariant to the thread count") {
  const FdSetup s = make_fd_setup(22);
  RenderOptions r1 = s.ropt, r4 = s.ropt;
  r1.threads = 1;
  r4.threads = 4;

  ParamGrads g1 = ParamGrads::zeros_like(s.scene);
  ParamGrads g4 = ParamGrads::zeros_like(s.scene);
  const double l1 =
      frame_loss(s.scene, s.cameras[0], &s.cameras[1], s.targets, s.boxes, s.loss, r1, &g1);
  const double l4 =
      frame_loss(s.scene, s.cameras[0], &s.cameras[1], s.targets, s.boxes, s.loss, r4, &g4);
  CHECK(l1 == l4);
  for (std::size_t i = 0; i < g1.statics.size(); ++i) {
    CHECK((g1.statics[i].mu - g4.statics[i].mu).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g1.statics[i].opacity_logit == g4.statics[i].opacity_logit);
  }
}

TEST_CASE("experiment configurations survive a save and load") {
  ExperimentConfig cfg = small_config(77);
  cfg.noise.box_scale = 0.1;
  cfg.noise.label_flip = 0.25;
  cfg.noise.flow_sigma = 1.5;
  cfg.noise.exposure = true;
  cfg.noise.mu_ray_sigma = 0.3;
  cfg.noise.reset_logits = true;
  cfg.train.iterations = 123;
  cfg.train.loss.semantic = true;
  cfg.train.loss.weights.lambda_s = 0.05;
  cfg.train.rates.opacity = 0.125;
  cfg.output_dir = "out/test";

  const std::string path = temp_file("cfg.json");
  save_experiment_config(path, cfg);
  const ExperimentConfig back = load_experiment_config(path);

  CHECK(back.seed == cfg.seed);
  CHECK(back.width == cfg.width);
  CHECK(back.height == cfg.height);
  CHECK(back.threads == cfg.threads);
  CHECK(back.camera.frames == cfg.camera.frames);
  CHECK(back.camera.fov_deg == cfg.camera.fov_deg);
  CHECK(back.camera.lateral_amplitude == cfg.camera.lateral_amplitude);
  CHECK(back.scene.static_gaussians == cfg.scene.static_gaussians);
  CHECK(back.scene.class_count == cfg.scene.class_count);
  CHECK(back.scene.sh_degree == cfg.scene.sh_degree);
  REQUIRE(back.scene.objects.size() == 1);
  CHECK(back.scene.objects[0].theta0 == cfg.scene.objects[0].theta0);
  CHECK(back.scene.objects[0].omega == cfg.scene.objects[0].omega);
  CHECK(back.scene.objects[0].gaussians == cfg.scene.objects[0].gaussians);
  CHECK(back.noise.box_scale == cfg.noise.box_scale);
  CHECK(back.noise.label_flip == cfg.noise.label_flip);
  CHECK(back.noise.flow_sigma == cfg.noise.flow_sigma);
  CHECK(back.noise.exposure == cfg.noise.exposure);
  CHECK(back.noise.mu_ray_sigma == cfg.noise.mu_ray_sigma);
  CHECK(back.noise.reset_logits == cfg.noise.reset_logits);
  CHECK(back.train.iterations == cfg.train.iterations);
  CHECK(back.train.loss.semantic == cfg.train.loss.semantic);
  CHECK(back.train.loss.weights.lambda_s == cfg.train.loss.weights.lambda_s);
  CHECK(back.train.rates.opacity == cfg.train.rates.opacity);
  CHECK(back.output_dir == cfg.output_dir);
}

TEST_CASE("track fitting trials are reproducible") {
  const TrackFitCell a = run_track_fit_trial(5, 0.10, 12);
  const TrackFitCell b = run_track_fit_trial(5, 0.10, 12);
  CHECK(a.e_t_none == b.e_t_none);
  CHECK(a.e_t_per_frame == b.e_t_per_frame);
  CHECK(a.e_t_unicycle == b.e_t_unicycle);
  CHECK(a.e_r_unicycle == b.e_r_unicycle);
  CHECK(a.e_t_none > 0.0);  // noisy observations really are noisy
}

TEST_CASE("the pipeline benchmark reports coherent stage timings") {
  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.width = 128;
  cfg.height = 96;
  cfg.threads = 2;
  cfg.camera.frames = 6;
  cfg.scene.static_gaussians = 1500;
  const BenchReport rep = run_bench(cfg);

  CHECK(rep.splats > 0);
  CHECK(rep.width == 128);
  CHECK(rep.height == 96);
  CHECK(rep.project_ms > 0.0);
  CHECK(rep.rgb_ms > 0.0);
  CHECK(rep.flow_ms > 0.0);
  CHECK(rep.fps_full > 0.0);
  // Stages accumulate work; allow slack for timer noise on the cheap ones.
  CHECK(rep.rgb_ms > 0.5 * rep.project_ms);
  CHECK(rep.flow_ms > 0.5 * rep.semantic_ms);
  CHECK(rep.max_dev <= 1e-6);
  CHECK(rep.speedup > 1.0);
}
