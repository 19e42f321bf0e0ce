// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kinesplat/backward.hpp"
#include "kinesplat/losses.hpp"
#include "kinesplat/optimizer.hpp"
#include "kinesplat/render.hpp"
#include "kinesplat/scene.hpp"
#include "kinesplat/track_fit.hpp"

namespace kinesplat {

// ---------------------------------------------------------------------------
// Experiment configuration. Everything downstream of a config + seed is
// deterministic, including pseudo-ground-truth noise draws.
// ---------------------------------------------------------------------------

struct CameraPathConfig {
  int frames = 40;
  double fov_deg = 55.0;
  double height = 1.4;            // meters above the ground plane
  double speed = 0.45;            // forward meters per frame
  double lateral_amplitude = 0.35;
  double lateral_period = 16.0;   // frames per sway cycle
  double yaw_amplitude = 0.04;    // radians
};

struct ObjectMotionConfig {
  double x0 = 9.0;
  double y0 = -1.6;
  double theta0 = 0.15;
  double v = 0.55;       // m/frame
  double omega = 0.035;  // rad/frame
  double height = 0.55;  // center height above ground
  int gaussians = 60;
  double length = 1.9, width = 0.9, tall = 0.7;  // body extents
};

struct SceneConfig {
  int static_gaussians = 2200;
  int class_count = 4;  // 0 ground, 1 backdrop, 2 boxes, 3 vehicles
  int sh_degree = 1;
  double extent = 26.0;  // corridor depth along +x
  int box_clusters = 6;
  int floaters = 0;      // off-surface clutter splats (semantic-path studies)
  std::vector<ObjectMotionConfig> objects;
};

struct NoiseConfig {
  double box_scale = 0.0;     // trajectory noise scale (0.05 / 0.10 / 0.20)
  double label_flip = 0.0;    // per-pixel semantic label flip probability
  double flow_sigma = 0.0;    // px, added per flow component
  bool exposure = false;      // bake per-frame gain/offset into targets
  double exposure_amp = 0.25;
  double exposure_offset = 0.04;
  double exposure_period = 2.7;  // frames; incommensurate with the split
  double exposure_drift = 0.1;
  // Initialization corruption (applied to the training start point).
  double mu_ray_sigma = 0.0;  // meters, along the ray to the mean camera
  double mu_sigma = 0.0;      // meters, isotropic
  double color_sigma = 0.0;   // on the DC band of the color coefficients
  bool reset_logits = false;  // re-draw semantic logits ~ N(0, 0.3)
};

struct LossConfig {
  bool image = true;
  bool exposure = false;     // compare the exposed render against targets
  bool semantic = false;
  bool semantic_2d = false;  // supervise the pixel-normalized semantic path
  bool flow = false;
  bool depth = false;
  bool track = false;        // motion-data + kinematic + smoothness terms
  LossWeights weights;
};

struct TrainConfig {
  int iterations = 250;
  LearningRates rates;
  LossConfig loss;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int width = 256;
  int height = 192;
  int threads = 0;  // 0: hardware concurrency
  CameraPathConfig camera;
  SceneConfig scene;
  NoiseConfig noise;
  TrainConfig train;
  std::string output_dir;

  int resolved_threads() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const std::string& path, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Ground truth and pseudo ground truth.
// ---------------------------------------------------------------------------

struct GroundTruth {
  SceneGraph scene;
  std::vector<FrameCamera> cameras;  // identity exposure, timestamps 0..F-1
  std::vector<int> train_frames;     // even indices
  std::vector<int> test_frames;      // odd indices
  std::vector<int> static_labels;    // class per static splat, -1 for clutter
};

// World axes: x forward, y left, z up. Camera axes: x right, y down,
// z forward. Statics get sharp ground-truth logits; objects follow exact
// arc-step trajectories (their kinematic residual is identically zero).
GroundTruth gen_scene(const ExperimentConfig& cfg);

struct FrameTargets {
  RasterD image;     // HxWx3, carries synthetic exposure when enabled
  RasterD semantic;  // HxWxS one-hot
  std::vector<std::uint8_t> semantic_mask;
  RasterD flow;  // HxWx2, toward the next frame; empty on the last
  std::vector<std::uint8_t> flow_mask;
  bool has_flow = false;
  RasterD depth;  // HxWx1; only used by gradient-check objectives
  std::vector<std::uint8_t> depth_mask;
};

struct PseudoGt {
  std::vector<FrameTargets> targets;  // per frame
  std::vector<RasterD> clean_image;   // uncorrupted renders, for evaluation
  std::vector<RasterD> clean_depth;
  std::vector<RasterD> clean_accum;
  std::vector<NoisyBoxTrack> boxes;   // per object
  std::vector<Eigen::Matrix3d> exposure_A;  // synthetic per-frame gains
  std::vector<Eigen::Vector3d> exposure_b;
};

// Renders the ground truth once per frame and corrupts copies of it per the
// noise config. Trajectory noise hits (x, y, theta) only; heights stay clean.
// sigma_xy is calibrated so the mean planar offset is 0.5 m at scale 0.10,
// sigma_theta so the mean |heading error| is 5 degrees at scale 0.10.
PseudoGt gen_pseudo_gt(const GroundTruth& gt, const ExperimentConfig& cfg);

// Start-point corruption for training experiments (scene copy, then noise).
SceneGraph corrupt_scene(const GroundTruth& gt, const NoiseConfig& noise, std::uint64_t seed);

// ---------------------------------------------------------------------------
// The differentiable objective and the trainer.
// ---------------------------------------------------------------------------

// Total loss of one frame: render at `cam` (flow paired against `cam2` when
// present), compare against `targets`, optionally add the motion-data,
// kinematic, and smoothness terms over `boxes`. When `grads` is non-null it
// is overwritten with the full parameter gradient.
double frame_loss(const SceneGraph& scene, const FrameCamera& cam, const FrameCamera* cam2,
                  const FrameTargets& targets, const std::vector<NoisyBoxTrack>& boxes,
                  const LossConfig& cfg, const RenderOptions& ropt, ParamGrads* grads);

// Adapter for the finite-difference checker: single frame plus optional flow
// pair, capturing targets and loss wiring by reference.
FdObjective make_frame_objective(const FrameTargets& targets,
                                 const std::vector<NoisyBoxTrack>& boxes, const LossConfig& cfg,
                                 const RenderOptions& ropt);

struct TrainResult {
  SceneGraph scene;
  std::vector<FrameCamera> cameras;  // per-frame exposure may have trained
  std::vector<double> loss_history;  // loss at each iteration, pre-step
};

// Cycles through `frames` in order, one gradient step per visit. Flow pairs
// frame f with frame f+1 whenever that camera exists (held-out frames still
// have known cameras; only their targets are withheld).
TrainResult train_scene(const SceneGraph& init, const std::vector<FrameCamera>& cameras,
                        const std::vector<int>& frames, const PseudoGt& pgt,
                        const TrainConfig& cfg, int threads);

// ---------------------------------------------------------------------------
// Study drivers. Each trial is fully determined by its seed.
// ---------------------------------------------------------------------------

// Trajectory rectification on synthetic curved tracks: fit the three modes
// against one noisy observation set and score against the ground truth.
struct TrackFitCell {
  double e_t_none = 0.0, e_t_per_frame = 0.0, e_t_unicycle = 0.0;
  double e_r_none = 0.0, e_r_per_frame = 0.0, e_r_unicycle = 0.0;
};
TrackFitCell run_track_fit_trial(std::uint64_t seed, double noise_scale, int frames = 40);

// Per-splat vs pixel-normalized semantic supervision on a cluttered scene:
// labels are re-learned from clean maps, then the splats at opacity >= 0.5
// are extracted. mIoU scores recovered labels on the true surface splats;
// chamfer accuracy penalizes surviving clutter.
struct SemanticPathOutcome {
  double miou_3d = 0.0, miou_2d = 0.0;
  double acc_3d = 0.0, acc_2d = 0.0;
  double comp_3d = 0.0, comp_2d = 0.0;
};
SemanticPathOutcome run_semantic_path_trial(std::uint64_t seed, int threads);

// Per-frame affine color correction under synthetic exposure: held-out
// frames are rendered raw and scored against clean targets.
struct ExposureOutcome {
  double psnr_with = 0.0, psnr_without = 0.0;
};
ExposureOutcome run_exposure_trial(std::uint64_t seed, int threads);

// Flow supervision vs image-only on depth-corrupted initializations: score
// masked depth RMSE on held-out frames.
struct FlowDepthOutcome {
  double rmse_with = 0.0, rmse_without = 0.0;
};
FlowDepthOutcome run_flow_depth_trial(std::uint64_t seed, int threads);

// ---------------------------------------------------------------------------
// Named studies and the pipeline benchmark.
// ---------------------------------------------------------------------------

struct MetricRow {
  std::string name;
  std::map<std::string, double> values;
};

// names: dynamic_noise | static_losses | softmax3d | exposure
std::vector<MetricRow> run_ablation(const std::string& name, const ExperimentConfig& cfg);

struct BenchReport {
  int splats = 0, width = 0, height = 0, reps = 0;
  // Cumulative per-frame milliseconds as stages switch on.
  double project_ms = 0.0;   // instantiate + project + bin
  double rgb_ms = 0.0;       // + color compositing
  double affine_ms = 0.0;    // + per-frame color correction
  double semantic_ms = 0.0;  // + semantic compositing
  double flow_ms = 0.0;      // + flow compositing (full pipeline)
  double fps_full = 0.0;
  double brute_ms = 0.0, tiled_ms = 0.0, speedup = 0.0;
  double max_dev = 0.0;  // max |tiled - brute| over all channels
};
BenchReport run_bench(const ExperimentConfig& cfg);

// Gradient-check fixture: a smooth, well-conditioned scene (large soft splats,
// every parameter class live, one moving object sampled off-grid) plus the
// matching targets and loss wiring. Scenes vary with the seed.
struct FdSetup {
  SceneGraph scene;
  std::vector<FrameCamera> cameras;  // frame and its flow pair
  FrameTargets targets;
  std::vector<NoisyBoxTrack> boxes;
  LossConfig loss;
  RenderOptions ropt;
};
FdSetup make_fd_setup(std::uint64_t seed);

// Convenience wrappers over the raster metrics for frame lists.
double mean_psnr(const std::vector<RasterD>& a, const std::vector<RasterD>& b);

}  // namespace kinesplat
