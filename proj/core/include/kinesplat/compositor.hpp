// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "kinesplat/projection.hpp"

namespace kinesplat {

struct RasterD {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> v;

  RasterD() = default;
  RasterD(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  double& at(int y, int x, int k) {
    return v[(static_cast<std::size_t>(y) * w + x) * c + k];
  }
  double at(int y, int x, int k) const {
    return v[(static_cast<std::size_t>(y) * w + x) * c + k];
  }
  bool empty() const { return v.empty(); }
};

struct RenderBuffers {
  RasterD color;            // HxWx3, pre-exposure
  RasterD color_exposed;    // HxWx3, filled when exposure is applied
  RasterD semantic;         // HxWxS, per-splat softmax path
  RasterD semantic_raw;     // HxWxS, accumulated raw logits
  RasterD semantic_2dnorm;  // HxWxS, pixel softmax of semantic_raw
  RasterD depth;            // HxWx1, +inf where nothing contributed
  RasterD flow;             // HxWx2
  RasterD accum_alpha;      // HxWx1
};

struct CompositeOptions {
  bool rgb = true;
  bool semantic = false;
  bool depth = false;
  bool flow = false;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  double alpha_clamp = 0.999;      // ceiling on per-contribution alpha
  double alpha_cut = 1.0 / 255.0;  // contributions below this are dropped
  double q_cut = 9.0;              // kernel support bound, matches binning
  double t_stop = 1e-4;            // stop once transmittance falls below
  int threads = 1;
};

inline constexpr double kDepthEmpty = std::numeric_limits<double>::infinity();

// alpha * exp(-0.5 (x - mean)^T inv_cov (x - mean)), clamped from above.
double pixel_alpha(double alpha, const Eigen::Vector2d& mean, const Eigen::Matrix2d& inv_cov,
                   const Eigen::Vector2d& x, double alpha_clamp = 0.999);

Eigen::VectorXd softmax(const Eigen::VectorXd& v);

// Front-to-back alpha blending over the tile bins. Color math does not depend
// on which other modalities are enabled.
RenderBuffers composite(const std::vector<Splat2D>& splats, const TileGrid& grid,
                        int class_count, const CompositeOptions& opt);

// out = A * in + b per pixel; `in` must have 3 channels.
RasterD apply_exposure(const RasterD& in, const Eigen::Matrix3d& A, const Eigen::Vector3d& b);

// Screen-space displacement of one world point between two cameras. mu_w2 is
// the point's world position at the second timestamp (equal to mu_w1 for
// static content). Returns nullopt when either projection is behind the near
// plane.
std::optional<Eigen::Vector2d> point_flow(const Eigen::Vector3d& mu_w1,
                                          const Eigen::Vector3d& mu_w2, const FrameCamera& cam1,
                                          const FrameCamera& cam2, double near_plane = 0.01);

}  // namespace kinesplat
