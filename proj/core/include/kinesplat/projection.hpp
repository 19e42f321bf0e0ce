// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "kinesplat/scene.hpp"

namespace kinesplat {

struct ProjectionConfig {
  double near_plane = 0.01;  // meters; contributions at or behind it are culled
  double cov_floor = 0.3;    // px^2 added to the cov2d diagonal before inversion
  double sigma_cut = 3.0;    // elliptical kernel support radius, in sigmas
};

struct Splat2D {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();    // raw EWA projection
  Eigen::Matrix2d inv_cov = Eigen::Matrix2d::Zero();  // inverse of floored cov2d
  double depth = 0.0;                                 // camera-space z
  double opacity = 0.0;                               // post-sigmoid
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::VectorXd logits;
  Eigen::Vector2d flow = Eigen::Vector2d::Zero();  // filled by the flow stage
  bool flow_valid = false;
  WorldSplatSource source;
};

// Projection intermediates retained for the analytic backward.
struct SplatGeom {
  Eigen::Vector3d p_cam = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();  // d mean2d / d p_cam
  Eigen::Matrix3d sigma_world = Eigen::Matrix3d::Zero();
  Eigen::Vector3d view_dir = Eigen::Vector3d::Zero();  // unit, world frame
  double view_len = 0.0;
  Eigen::VectorXd probs;  // softmax of the splat's logits
  // Flow stage (second camera / advanced point).
  Eigen::Vector3d p_cam2 = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 2, 3> J2 = Eigen::Matrix<double, 2, 3>::Zero();
};

// Perspective projection of a camera-space point through K, with its Jacobian.
Eigen::Vector2d project_point(const Eigen::Matrix3d& K, const Eigen::Vector3d& p_cam,
                              Eigen::Matrix<double, 2, 3>* J = nullptr);

// EWA projection of one world-space Gaussian. Returns nullopt when culled:
// camera-space z <= near plane, or the sigma_cut ellipse misses the image.
std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const FrameCamera& cam,
                                        const ProjectionConfig& cfg = {},
                                        SplatGeom* geom = nullptr);

// Minimum of (p - mean)^T M (p - mean) over [x0,x1] x [y0,y1]; M is SPD.
double min_quadform_over_rect(const Eigen::Vector2d& mean, const Eigen::Matrix2d& M, double x0,
                              double y0, double x1, double y1);

inline bool ellipse_intersects_rect(const Eigen::Vector2d& mean, const Eigen::Matrix2d& M,
                                    double x0, double y0, double x1, double y1, double q_max) {
  return min_quadform_over_rect(mean, M, x0, y0, x1, y1) <= q_max;
}

struct TileGrid {
  int tile_size = 16;
  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  // Splat indices per tile, sorted by (depth, index); row-major tile order.
  std::vector<std::vector<int>> bins;

  int tile_count() const { return tiles_x * tiles_y; }
};

// Bins each splat into every tile its support ellipse intersects. Tile
// rectangles are closed and clipped to the image, so every pixel center with
// quadform <= q_max lands in a populated bin.
TileGrid bin_tiles(const std::vector<Splat2D>& splats, int width, int height, int tile_size,
                   double q_max = 9.0);

}  // namespace kinesplat
