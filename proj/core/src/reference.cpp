// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kinesplat/parallel.hpp"

namespace kinesplat {

RenderBuffers render_reference(const std::vector<Splat2D>& splats, int width, int height,
                               int class_count, const CompositeOptions& opt) {
  RenderBuffers out;
  if (opt.rgb) out.color = RasterD(height, width, 3);
  if (opt.semantic) {
    out.semantic = RasterD(height, width, class_count);
    out.semantic_raw = RasterD(height, width, class_count);
    out.semantic_2dnorm = RasterD(height, width, class_count);
  }
  if (opt.depth) out.depth = RasterD(height, width, 1, kDepthEmpty);
  if (opt.flow) out.flow = RasterD(height, width, 2);
  out.accum_alpha = RasterD(height, width, 1);

  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return splats[static_cast<std::size_t>(a)].depth < splats[static_cast<std::size_t>(b)].depth;
  });

  std::vector<Eigen::VectorXd> probs;
  if (opt.semantic) {
    probs.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
      const Eigen::VectorXd& l = splats[i].logits;
      Eigen::VectorXd e = (l.array() - l.maxCoeff()).exp();
      probs[i] = e / e.sum();
    }
  }

  parallel_for(height, opt.threads, [&](std::int64_t yb, std::int64_t ye) {
    Eigen::VectorXd sem, raw;
    if (opt.semantic) {
      sem.resize(class_count);
      raw.resize(class_count);
    }
    for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y) {
      for (int x = 0; x < width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double trans = 1.0;
        Eigen::Vector3d col = Eigen::Vector3d::Zero();
        Eigen::Vector2d flo = Eigen::Vector2d::Zero();
        double dep = 0.0;
        int contribs = 0;
        if (opt.semantic) {
          sem.setZero();
          raw.setZero();
        }
        for (const int idx : order) {
          if (trans < opt.t_stop) break;
          const Splat2D& s = splats[static_cast<std::size_t>(idx)];
          const double dx = px - s.mean2d.x();
          const double dy = py - s.mean2d.y();
          const double q = s.inv_cov(0, 0) * dx * dx + s.inv_cov(1, 1) * dy * dy +
                           (s.inv_cov(0, 1) + s.inv_cov(1, 0)) * dx * dy;
          if (q > opt.q_cut) continue;
          double a = s.opacity * std::exp(-0.5 * q);
          if (a > opt.alpha_clamp) a = opt.alpha_clamp;
          if (a < opt.alpha_cut) continue;
          const double wgt = a * trans;
          if (opt.rgb) col += wgt * s.color;
          if (opt.semantic) {
            sem += wgt * probs[static_cast<std::size_t>(idx)];
            raw += wgt * s.logits;
          }
          if (opt.depth) dep += wgt * s.depth;
          if (opt.flow && s.flow_valid) flo += wgt * s.flow;
          trans *= 1.0 - a;
          ++contribs;
        }
        if (opt.rgb) {
          col += trans * opt.background;
          for (int k = 0; k < 3; ++k) out.color.at(y, x, k) = col[k];
        }
        if (opt.semantic) {
          Eigen::VectorXd e = (raw.array() - raw.maxCoeff()).exp();
          const Eigen::VectorXd norm2d = e / e.sum();
          for (int k = 0; k < class_count; ++k) {
            out.semantic.at(y, x, k) = sem[k];
            out.semantic_raw.at(y, x, k) = raw[k];
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
  });
  return out;
}

}  // namespace kinesplat
