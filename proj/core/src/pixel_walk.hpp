// SPDX-License-Identifier: Apache-2.0
// Internal: the single source of truth for per-pixel traversal rules, shared
// by the forward compositor and the backward pass so their tapes agree.
#pragma once

#include <cmath>
#include <vector>

#include "kinesplat/projection.hpp"

namespace kinesplat::detail {

struct WalkRules {
  double alpha_clamp = 0.999;
  double alpha_cut = 1.0 / 255.0;
  double q_cut = 9.0;
  double t_stop = 1e-4;
};

struct Contribution {
  int idx = 0;        // splat index
  double alpha = 0.0;  // clamped per-pixel alpha
  double trans = 0.0;  // transmittance before this contribution
  bool clamped = false;
};

// Walks bin entries front to back, invoking fn(Contribution) for each one that
// survives the support and opacity cuts. Returns the final transmittance.
template <class Fn>
inline double walk_pixel(const std::vector<Splat2D>& splats, const std::vector<int>& bin,
                         const Eigen::Vector2d& px, const WalkRules& rules, Fn&& fn) {
  double trans = 1.0;
  for (const int idx : bin) {
    if (trans < rules.t_stop) break;
    const Splat2D& s = splats[static_cast<std::size_t>(idx)];
    const Eigen::Vector2d d = px - s.mean2d;
    const double q = d.x() * (s.inv_cov(0, 0) * d.x() + s.inv_cov(0, 1) * d.y()) +
                     d.y() * (s.inv_cov(1, 0) * d.x() + s.inv_cov(1, 1) * d.y());
    if (q > rules.q_cut) continue;
    double a = s.opacity * std::exp(-0.5 * q);
    bool clamped = false;
    if (a > rules.alpha_clamp) {
      a = rules.alpha_clamp;
      clamped = true;
    }
    if (a < rules.alpha_cut) continue;
    fn(Contribution{idx, a, trans, clamped});
    trans *= 1.0 - a;
  }
  return trans;
}

inline Eigen::Vector2d pixel_center(int x, int y) {
  return {static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
}

}  // namespace kinesplat::detail
