// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/compositor.hpp"

#include <cmath>
#include <stdexcept>

#include "kinesplat/parallel.hpp"
#include "pixel_walk.hpp"

namespace kinesplat {

double pixel_alpha(double alpha, const Eigen::Vector2d& mean, const Eigen::Matrix2d& inv_cov,
                   const Eigen::Vector2d& x, double alpha_clamp) {
  const Eigen::Vector2d d = x - mean;
  const double q = d.dot(inv_cov * d);
  return std::min(alpha * std::exp(-0.5 * q), alpha_clamp);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

RenderBuffers composite(const std::vector<Splat2D>& splats, const TileGrid& grid,
                        int class_count, const CompositeOptions& opt) {
  const int h = grid.height, w = grid.width;
  RenderBuffers out;
  if (opt.rgb) out.color = RasterD(h, w, 3);
  if (opt.semantic) {
    if (class_count <= 0) throw std::invalid_argument("composite: class_count must be positive");
    out.semantic = RasterD(h, w, class_count);
    out.semantic_raw = RasterD(h, w, class_count);
    out.semantic_2dnorm = RasterD(h, w, class_count);
  }
  if (opt.depth) out.depth = RasterD(h, w, 1, kDepthEmpty);
  if (opt.flow) out.flow = RasterD(h, w, 2);
  out.accum_alpha = RasterD(h, w, 1);

  // Per-splat class probabilities, shared across pixels.
  std::vector<Eigen::VectorXd> probs;
  if (opt.semantic) {
    probs.resize(splats.size());
    parallel_for(static_cast<std::int64_t>(splats.size()), opt.threads,
                 [&](std::int64_t b, std::int64_t e) {
                   for (std::int64_t i = b; i < e; ++i) {
                     probs[static_cast<std::size_t>(i)] =
                         softmax(splats[static_cast<std::size_t>(i)].logits);
                   }
                 });
  }

  const detail::WalkRules rules{opt.alpha_clamp, opt.alpha_cut, opt.q_cut, opt.t_stop};

  parallel_for(grid.tile_count(), opt.threads, [&](std::int64_t tb, std::int64_t te) {
    Eigen::VectorXd sem_acc, raw_acc;
    if (opt.semantic) {
      sem_acc.resize(class_count);
      raw_acc.resize(class_count);
    }
    for (std::int64_t tile = tb; tile < te; ++tile) {
      const auto& bin = grid.bins[static_cast<std::size_t>(tile)];
      const int tx = static_cast<int>(tile) % grid.tiles_x;
      const int ty = static_cast<int>(tile) / grid.tiles_x;
      const int x0 = tx * grid.tile_size, x1 = std::min(w, x0 + grid.tile_size);
      const int y0 = ty * grid.tile_size, y1 = std::min(h, y0 + grid.tile_size);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          Eigen::Vector3d col = Eigen::Vector3d::Zero();
          Eigen::Vector2d flo = Eigen::Vector2d::Zero();
          double dep = 0.0;
          int contribs = 0;
          if (opt.semantic) {
            sem_acc.setZero();
            raw_acc.setZero();
          }
          const double trans = detail::walk_pixel(
              splats, bin, detail::pixel_center(x, y), rules,
              [&](const detail::Contribution& c) {
                const Splat2D& s = splats[static_cast<std::size_t>(c.idx)];
                const double wgt = c.alpha * c.trans;
                if (opt.rgb) col += wgt * s.color;
                if (opt.semantic) {
                  sem_acc += wgt * probs[static_cast<std::size_t>(c.idx)];
                  raw_acc += wgt * s.logits;
                }
                if (opt.depth) dep += wgt * s.depth;
                if (opt.flow && s.flow_valid) flo += wgt * s.flow;
                ++contribs;
              });
          if (opt.rgb) {
            col += trans * opt.background;
            for (int k = 0; k < 3; ++k) out.color.at(y, x, k) = col[k];
          }
          if (opt.semantic) {
            const Eigen::VectorXd norm2d = softmax(raw_acc);
            for (int k = 0; k < class_count; ++k) {
              out.semantic.at(y, x, k) = sem_acc[k];
              out.semantic_raw.at(y, x, k) = raw_acc[k];
              out.semantic_2dnorm.at(y, x, k) = norm2d[k];
            }
          }
          if (opt.depth && contribs > 0) out.depth.at(y, x, 0) = dep;
          if (opt.flow) {
            out.flow.at(y, x, 0) = flo.x();
            out.flow.at(y, x, 1) = flo.y();
          }
          out.accum_alpha.at(y, x, 0) = 1.0 - trans;
        }
      }
    }
  });
  return out;
}

RasterD apply_exposure(const RasterD& in, const Eigen::Matrix3d& A, const Eigen::Vector3d& b) {
  if (in.c != 3) throw std::invalid_argument("apply_exposure: expected 3 channels");
  RasterD out(in.h, in.w, 3);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      const Eigen::Vector3d c(in.at(y, x, 0), in.at(y, x, 1), in.at(y, x, 2));
      const Eigen::Vector3d e = A * c + b;
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = e[k];
    }
  }
  return out;
}

std::optional<Eigen::Vector2d> point_flow(const Eigen::Vector3d& mu_w1,
                                          const Eigen::Vector3d& mu_w2, const FrameCamera& cam1,
                                          const FrameCamera& cam2, double near_plane) {
  const Eigen::Vector3d p1 = cam1.R * mu_w1 + cam1.t;
  const Eigen::Vector3d p2 = cam2.R * mu_w2 + cam2.t;
  if (p1.z() <= near_plane || p2.z() <= near_plane) return std::nullopt;
  return project_point(cam2.K, p2) - project_point(cam1.K, p1);
}

}  // namespace kinesplat
