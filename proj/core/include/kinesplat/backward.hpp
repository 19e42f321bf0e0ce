// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kinesplat/render.hpp"
#include "kinesplat/track_fit.hpp"

namespace kinesplat {

// Upstream derivatives with respect to the rendered buffers. Empty rasters
// contribute nothing; non-empty ones must match the frame size and a modality
// that was actually rendered.
struct BufferGrads {
  RasterD color;            // d/d color; d/d color_exposed when color_is_exposed
  RasterD semantic;         // d/d blended per-splat-softmax probabilities
  RasterD semantic_2dnorm;  // d/d pixel-normalized logit blend
  RasterD depth;            // empty-pixel sentinel carries no gradient
  RasterD flow;
  RasterD accum_alpha;
  bool color_is_exposed = false;
};

struct GaussianGrads {
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();  // left-tangent rotation increment
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  std::vector<Eigen::Vector3d> sh;
  Eigen::VectorXd logits;

  static GaussianGrads zeros_like(const Gaussian3D& g);
  void add_scaled(const GaussianGrads& other, double s);
};

struct CameraGrads {
  Eigen::Matrix3d exposure_A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d exposure_b = Eigen::Vector3d::Zero();
};

// Gradient of a scalar objective with respect to every scene parameter plus
// the rendered frame's exposure parameters.
struct ParamGrads {
  std::vector<GaussianGrads> statics;
  std::vector<std::vector<GaussianGrads>> objects;
  std::vector<TrackGrads> tracks;
  CameraGrads camera;

  static ParamGrads zeros_like(const SceneGraph& scene);
  void add_scaled(const ParamGrads& other, double s);
  // False if any entry is not finite; `where` then names the first offender.
  bool all_finite(std::string* where = nullptr) const;
};

// Pulls buffer derivatives back to the parameters. `result` must come from a
// render of this exact scene/camera pair with options.training set, and `cam2`
// must match the flow pairing used there. The reduction order is fixed, so the
// output is bit-identical for any thread count. Dynamic objects require the
// unicycle pose policy.
ParamGrads backward(const SceneGraph& scene, const FrameCamera& cam, const FrameCamera* cam2,
                    const RenderResult& result, const BufferGrads& upstream,
                    const RenderOptions& opt);

// ---- finite-difference verification ----

struct FdEntry {
  std::string param_class;
  std::string label;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_err = 0.0;
  std::map<std::string, double> max_by_class;
  std::map<std::string, int> count_by_class;
};

// Which parameter classes to probe. max_per_class 0 probes every coordinate;
// otherwise a seeded uniform subsample of each class.
struct FdSelector {
  bool mu = true;
  bool rot = true;
  bool log_scale = true;
  bool opacity = true;
  bool sh = true;
  bool logits = true;
  bool exposure = true;
  bool track_state = true;
  bool track_height = true;
  bool track_velocity = true;
  int max_per_class = 0;
};

// Evaluates the scalar objective for the given parameters; fills the analytic
// gradient too when grads is non-null.
using FdObjective = std::function<void(const SceneGraph&, const std::vector<FrameCamera>&,
                                       double* loss, ParamGrads* grads)>;

// Central differences with step h against the analytic gradient; relative
// error is |numeric - analytic| / max(|analytic|, 1e-8). Rotations are probed
// along tangent axes, with the quaternion re-normalized.
FdReport fd_check(SceneGraph scene, std::vector<FrameCamera> cams, const FdObjective& objective,
                  const FdSelector& sel = {}, double h = 1e-4, std::uint64_t seed = 0);

}  // namespace kinesplat
