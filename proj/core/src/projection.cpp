// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kinesplat/sh.hpp"

namespace kinesplat {

Eigen::Vector2d project_point(const Eigen::Matrix3d& K, const Eigen::Vector3d& p_cam,
                              Eigen::Matrix<double, 2, 3>* J) {
  const double z = p_cam.z();
  const double u_num = K(0, 0) * p_cam.x() + K(0, 1) * p_cam.y() + K(0, 2) * z;
  const double v_num = K(1, 1) * p_cam.y() + K(1, 2) * z;
  const Eigen::Vector2d uv(u_num / z, v_num / z);
  if (J) {
    const double iz = 1.0 / z;
    const double iz2 = iz * iz;
    (*J)(0, 0) = K(0, 0) * iz;
    (*J)(0, 1) = K(0, 1) * iz;
    (*J)(0, 2) = -(K(0, 0) * p_cam.x() + K(0, 1) * p_cam.y()) * iz2;
    (*J)(1, 0) = 0.0;
    (*J)(1, 1) = K(1, 1) * iz;
    (*J)(1, 2) = -K(1, 1) * p_cam.y() * iz2;
  }
  return uv;
}

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const FrameCamera& cam,
                                        const ProjectionConfig& cfg, SplatGeom* geom) {
  const Eigen::Vector3d p = cam.R * g.mu + cam.t;
  if (p.z() <= cfg.near_plane) return std::nullopt;

  Eigen::Matrix<double, 2, 3> J;
  const Eigen::Vector2d mean2d = project_point(cam.K, p, &J);

  const Eigen::Matrix3d sigma = covariance_of(g);
  const Eigen::Matrix<double, 2, 3> A = J * cam.R;
  const Eigen::Matrix2d cov_raw = A * sigma * A.transpose();
  Eigen::Matrix2d cov = cov_raw;
  cov(0, 0) += cfg.cov_floor;
  cov(1, 1) += cfg.cov_floor;
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
  Eigen::Matrix2d inv;
  inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
  inv /= det;

  const double q_max = cfg.sigma_cut * cfg.sigma_cut;
  if (!ellipse_intersects_rect(mean2d, inv, 0.0, 0.0, static_cast<double>(cam.width),
                               static_cast<double>(cam.height), q_max)) {
    return std::nullopt;
  }

  Splat2D s;
  s.mean2d = mean2d;
  s.cov2d = cov_raw;
  s.inv_cov = inv;
  s.depth = p.z();
  s.opacity = g.opacity();

  const Eigen::Vector3d view = g.mu - cam.center();
  const double len = view.norm();
  const Eigen::Vector3d dir = view / len;
  s.color = evaluate_sh(g, dir);
  s.logits = g.logits;

  if (geom) {
    geom->p_cam = p;
    geom->J = J;
    geom->sigma_world = sigma;
    geom->view_dir = dir;
    geom->view_len = len;
    if (g.logits.size() > 0) {
      const double m = g.logits.maxCoeff();
      Eigen::VectorXd e = (g.logits.array() - m).exp();
      geom->probs = e / e.sum();
    }
  }
  return s;
}

namespace {

// 1D quadratic along one rectangle edge, minimized over the edge extent.
double edge_min(const Eigen::Vector2d& d0, const Eigen::Matrix2d& M, int fixed_axis, double lo,
                double hi) {
  const int free_axis = 1 - fixed_axis;
  const double a = M(free_axis, free_axis);
  const double b = M(free_axis, fixed_axis);
  const double df = d0[fixed_axis];
  double t = (a > 0.0) ? -b * df / a : lo;
  t = std::clamp(t, lo, hi);
  Eigen::Vector2d d = d0;
  d[free_axis] = t;
  return d.dot(M * d);
}

}  // namespace

double min_quadform_over_rect(const Eigen::Vector2d& mean, const Eigen::Matrix2d& M, double x0,
                              double y0, double x1, double y1) {
  if (mean.x() >= x0 && mean.x() <= x1 && mean.y() >= y0 && mean.y() <= y1) return 0.0;
  // The minimum of a convex quadratic over a box it does not contain the
  // center of lies on the boundary; check all four edges.
  double best = std::numeric_limits<double>::infinity();
  {
    Eigen::Vector2d d(x0 - mean.x(), 0.0);
    best = std::min(best, edge_min(d, M, 0, y0 - mean.y(), y1 - mean.y()));
    d.x() = x1 - mean.x();
    best = std::min(best, edge_min(d, M, 0, y0 - mean.y(), y1 - mean.y()));
  }
  {
    Eigen::Vector2d d(0.0, y0 - mean.y());
    best = std::min(best, edge_min(d, M, 1, x0 - mean.x(), x1 - mean.x()));
    d.y() = y1 - mean.y();
    best = std::min(best, edge_min(d, M, 1, x0 - mean.x(), x1 - mean.x()));
  }
  return best;
}

TileGrid bin_tiles(const std::vector<Splat2D>& splats, int width, int height, int tile_size,
                   double q_max) {
  if (tile_size <= 0) throw std::invalid_argument("tile_size must be positive");
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.width = width;
  grid.height = height;
  grid.tiles_x = (width + tile_size - 1) / tile_size;
  grid.tiles_y = (height + tile_size - 1) / tile_size;
  grid.bins.assign(static_cast<std::size_t>(grid.tile_count()), {});

  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = splats[static_cast<std::size_t>(a)].depth;
    const double db = splats[static_cast<std::size_t>(b)].depth;
    return da != db ? da < db : a < b;
  });

  for (const int idx : order) {
    const Splat2D& s = splats[static_cast<std::size_t>(idx)];
    // Conservative bbox of the support ellipse from the floored covariance
    // (the inverse of inv_cov), then the exact test per candidate tile.
    const double det_inv = s.inv_cov(0, 0) * s.inv_cov(1, 1) - s.inv_cov(0, 1) * s.inv_cov(1, 0);
    const double cxx = s.inv_cov(1, 1) / det_inv;
    const double cyy = s.inv_cov(0, 0) / det_inv;
    const double hx = std::sqrt(std::max(0.0, q_max * cxx));
    const double hy = std::sqrt(std::max(0.0, q_max * cyy));
    const int tx0 = std::max(0, static_cast<int>(std::floor((s.mean2d.x() - hx) / tile_size)));
    const int tx1 = std::min(grid.tiles_x - 1,
                             static_cast<int>(std::floor((s.mean2d.x() + hx) / tile_size)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((s.mean2d.y() - hy) / tile_size)));
    const int ty1 = std::min(grid.tiles_y - 1,
                             static_cast<int>(std::floor((s.mean2d.y() + hy) / tile_size)));
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        const double x0 = static_cast<double>(tx) * tile_size;
        const double y0 = static_cast<double>(ty) * tile_size;
        const double x1 = std::min(x0 + tile_size, static_cast<double>(width));
        const double y1 = std::min(y0 + tile_size, static_cast<double>(height));
        if (ellipse_intersects_rect(s.mean2d, s.inv_cov, x0, y0, x1, y1, q_max)) {
          grid.bins[static_cast<std::size_t>(ty * grid.tiles_x + tx)].push_back(idx);
        }
      }
    }
  }
  return grid;
}

}  // namespace kinesplat
