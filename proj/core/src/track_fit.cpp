// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/track_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kinesplat/compensated.hpp"
#include "kinesplat/metrics.hpp"

namespace kinesplat {
namespace {

constexpr double kGradClipNorm = 10.0;  // subgradient steps are norm-limited
constexpr double kTimeMatchTol = 1e-9;

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

struct Residual {
  double value = 0.0;
  double weight = 1.0;
  // Sparse row: parameter index -> partial derivative.
  std::vector<std::pair<int, double>> jac;
};

// Parameter layout for the least-squares path: states first (x, y, theta per
// frame), then interval velocities (v, omega per interval).
int state_base(int frame) { return 3 * frame; }
int vel_base(int frame_count, int interval) { return 3 * frame_count + 2 * interval; }

// Kinematic residuals for one interval, shared between the loss/gradient path
// and the least-squares path. Partials are with respect to
// (x0, y0, th0, x1, y1, th1, v, w) in that order.
struct IntervalResiduals {
  double r1, r2, r3;
  Eigen::Matrix<double, 3, 8> d;
};

IntervalResiduals interval_residuals(const UnicycleState& s0, const UnicycleState& s1,
                                     const Eigen::Vector2d& vel, double dt) {
  IntervalResiduals out;
  out.d.setZero();
  const double v = vel[0], w = vel[1];
  const double c0 = std::cos(s0.theta), si0 = std::sin(s0.theta);

  // Each residual is written as "stored next state minus recomputed step",
  // grouping the arithmetic exactly like propagate_unicycle. A track whose
  // states came from the propagation then yields residuals that are exactly
  // zero (not merely roundoff-small), so the L1 subgradient vanishes too and
  // such tracks are true stationary points of the consistency term.
  if (std::abs(w) < kOmegaEps) {
    // Series form, matching the propagation branch: the arc collapses to a
    // straight segment with a first-order turn correction.
    out.r1 = s1.x - (s0.x + v * dt * (c0 - 0.5 * dt * w * si0));
    out.r2 = s1.y - (s0.y + v * dt * (si0 + 0.5 * dt * w * c0));
    out.d(0, 0) = -1.0;
    out.d(0, 3) = 1.0;
    out.d(0, 2) = v * dt * (si0 + 0.5 * dt * w * c0);
    out.d(0, 6) = -dt * (c0 - 0.5 * dt * w * si0);
    out.d(0, 7) = 0.5 * v * dt * dt * si0;
    out.d(1, 1) = -1.0;
    out.d(1, 4) = 1.0;
    out.d(1, 2) = -v * dt * (c0 - 0.5 * dt * w * si0);
    out.d(1, 6) = -dt * (si0 + 0.5 * dt * w * c0);
    out.d(1, 7) = -0.5 * v * dt * dt * c0;
  } else {
    const double c1 = std::cos(s1.theta), si1 = std::sin(s1.theta);
    const double r = v / w;
    out.r1 = s1.x - (s0.x + r * (si1 - si0));
    out.r2 = s1.y - (s0.y - r * (c1 - c0));
    out.d(0, 0) = -1.0;
    out.d(0, 3) = 1.0;
    out.d(0, 2) = r * c0;
    out.d(0, 5) = -r * c1;
    out.d(0, 6) = -(si1 - si0) / w;
    out.d(0, 7) = v * (si1 - si0) / (w * w);
    out.d(1, 1) = -1.0;
    out.d(1, 4) = 1.0;
    out.d(1, 2) = r * si0;
    out.d(1, 5) = -r * si1;
    out.d(1, 6) = (c1 - c0) / w;
    out.d(1, 7) = -v * (c1 - c0) / (w * w);
  }
  out.r3 = s1.theta - (s0.theta + dt * w);
  out.d(2, 2) = -1.0;
  out.d(2, 5) = 1.0;
  out.d(2, 7) = -dt;
  return out;
}

struct Objective {
  double lambda_t, lambda_uni, lambda_reg;
  bool smooth_omega;
};

double evaluate(const UnicycleTrack& track, const NoisyBoxTrack& obs, const Objective& o,
                TrackGrads* grad) {
  double total = 0.0;
  if (o.lambda_t != 0.0) {
    TrackGrads g = grad ? TrackGrads::zeros_like(track) : TrackGrads{};
    total += o.lambda_t * loss_track(track, obs, grad ? &g : nullptr);
    if (grad) grad->add_scaled(g, o.lambda_t);
  }
  if (o.lambda_uni != 0.0) {
    TrackGrads g = grad ? TrackGrads::zeros_like(track) : TrackGrads{};
    total += o.lambda_uni * loss_unicycle(track, grad ? &g : nullptr);
    if (grad) grad->add_scaled(g, o.lambda_uni);
  }
  if (o.lambda_reg != 0.0) {
    TrackGrads g = grad ? TrackGrads::zeros_like(track) : TrackGrads{};
    total += o.lambda_reg * loss_smooth(track, o.smooth_omega, grad ? &g : nullptr);
    if (grad) grad->add_scaled(g, o.lambda_reg);
  }
  return total;
}

UnicycleTrack initial_track(const NoisyBoxTrack& obs) {
  const int n = static_cast<int>(obs.timestamps.size());
  if (n < 2) throw std::invalid_argument("fit_track: need at least two frames");
  UnicycleTrack t;
  t.timestamps = obs.timestamps;
  t.states.resize(n);
  t.heights = obs.heights;

  // Fill invalid frames by linear interpolation between valid neighbours
  // (constant extrapolation at the ends).
  std::vector<int> valid_idx;
  for (int i = 0; i < n; ++i) {
    if (obs.is_valid(i)) valid_idx.push_back(i);
  }
  if (valid_idx.empty()) throw std::invalid_argument("fit_track: no valid observations");
  for (int i = 0; i < n; ++i) {
    if (obs.is_valid(i)) {
      t.states[i] = obs.obs[i];
      continue;
    }
    const auto it = std::lower_bound(valid_idx.begin(), valid_idx.end(), i);
    if (it == valid_idx.begin()) {
      t.states[i] = obs.obs[valid_idx.front()];
      t.heights[i] = obs.heights[valid_idx.front()];
    } else if (it == valid_idx.end()) {
      t.states[i] = obs.obs[valid_idx.back()];
      t.heights[i] = obs.heights[valid_idx.back()];
    } else {
      const int a = *(it - 1), b = *it;
      const double u = (obs.timestamps[i] - obs.timestamps[a]) /
                       (obs.timestamps[b] - obs.timestamps[a]);
      t.states[i].x = obs.obs[a].x + u * (obs.obs[b].x - obs.obs[a].x);
      t.states[i].y = obs.obs[a].y + u * (obs.obs[b].y - obs.obs[a].y);
      t.states[i].theta = obs.obs[a].theta + u * (obs.obs[b].theta - obs.obs[a].theta);
      t.heights[i] = obs.heights[a] + u * (obs.heights[b] - obs.heights[a]);
    }
  }

  t.velocities.resize(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    const double dt = obs.timestamps[i + 1] - obs.timestamps[i];
    const double w = (t.states[i + 1].theta - t.states[i].theta) / dt;
    // Project the displacement onto the mid-arc heading, then undo the
    // chord-vs-arc shortening; exact for noiseless unicycle motion, a
    // serviceable estimate otherwise.
    const double mid = t.states[i].theta + 0.5 * w * dt;
    const double chord = std::cos(mid) * (t.states[i + 1].x - t.states[i].x) +
                         std::sin(mid) * (t.states[i + 1].y - t.states[i].y);
    const double half = 0.5 * w * dt;
    const double sinc = std::abs(half) < 1e-8 ? 1.0 - half * half / 6.0 : std::sin(half) / half;
    t.velocities[i] = Eigen::Vector2d(chord / (dt * sinc), w);
  }
  return t;
}

void gradient_descent(UnicycleTrack* track, const NoisyBoxTrack& obs, const Objective& o,
                      const FitOptions& opt) {
  const int n = static_cast<int>(track->states.size());
  double lr = opt.lr;
  for (int it = 0; it < opt.iterations; ++it) {
    TrackGrads g = TrackGrads::zeros_like(*track);
    evaluate(*track, obs, o, &g);

    double norm_sq = 0.0;
    for (const auto& s : g.states) norm_sq += s.squaredNorm();
    for (const auto& v : g.velocities) norm_sq += v.squaredNorm();
    const double norm = std::sqrt(norm_sq);
    const double scale = norm > kGradClipNorm ? kGradClipNorm / norm : 1.0;

    for (int i = 0; i < n; ++i) {
      track->states[i].x -= lr * scale * g.states[i][0];
      track->states[i].y -= lr * scale * g.states[i][1];
      track->states[i].theta -= lr * scale * g.states[i][2];
    }
    for (int i = 0; i + 1 < n; ++i) track->velocities[i] -= lr * scale * g.velocities[i];
    lr *= opt.lr_decay;
  }
}

// Huber-weighted Levenberg-Marquardt over the stacked residuals.
void gauss_newton(UnicycleTrack* track, const NoisyBoxTrack& obs, const Objective& o,
                  const FitOptions& opt) {
  const int n = static_cast<int>(track->states.size());
  const int dim = 3 * n + 2 * (n - 1);
  const double delta = opt.huber_delta;

  const auto pack = [&](const UnicycleTrack& t) {
    Eigen::VectorXd p(dim);
    for (int i = 0; i < n; ++i) {
      p[state_base(i) + 0] = t.states[i].x;
      p[state_base(i) + 1] = t.states[i].y;
      p[state_base(i) + 2] = t.states[i].theta;
    }
    for (int i = 0; i + 1 < n; ++i) p.segment<2>(vel_base(n, i)) = t.velocities[i];
    return p;
  };
  const auto unpack = [&](const Eigen::VectorXd& p, UnicycleTrack* t) {
    for (int i = 0; i < n; ++i) {
      t->states[i].x = p[state_base(i) + 0];
      t->states[i].y = p[state_base(i) + 1];
      t->states[i].theta = p[state_base(i) + 2];
    }
    for (int i = 0; i + 1 < n; ++i) t->velocities[i] = p.segment<2>(vel_base(n, i));
  };

  const auto residuals = [&](const UnicycleTrack& t) {
    std::vector<Residual> rs;
    if (o.lambda_t != 0.0) {
      for (int i = 0; i < n; ++i) {
        if (!obs.is_valid(i)) continue;
        rs.push_back({t.states[i].x - obs.obs[i].x, o.lambda_t, {{state_base(i), 1.0}}});
        rs.push_back({t.states[i].y - obs.obs[i].y, o.lambda_t, {{state_base(i) + 1, 1.0}}});
      }
    }
    if (o.lambda_uni != 0.0) {
      for (int i = 0; i + 1 < n; ++i) {
        const double dt = t.timestamps[i + 1] - t.timestamps[i];
        const auto ir = interval_residuals(t.states[i], t.states[i + 1], t.velocities[i], dt);
        const int cols[8] = {state_base(i),     state_base(i) + 1,     state_base(i) + 2,
                             state_base(i + 1), state_base(i + 1) + 1, state_base(i + 1) + 2,
                             vel_base(n, i),    vel_base(n, i) + 1};
        const double vals[3] = {ir.r1, ir.r2, ir.r3};
        for (int r = 0; r < 3; ++r) {
          Residual res{vals[r], o.lambda_uni, {}};
          for (int c = 0; c < 8; ++c) {
            if (ir.d(r, c) != 0.0) res.jac.emplace_back(cols[c], ir.d(r, c));
          }
          rs.push_back(std::move(res));
        }
      }
    }
    if (o.lambda_reg != 0.0) {
      const int m = n - 1;  // velocity sequence length
      for (int i = 1; i + 1 < m; ++i) {
        rs.push_back({t.velocities[i - 1][0] - 2.0 * t.velocities[i][0] + t.velocities[i + 1][0],
                      o.lambda_reg,
                      {{vel_base(n, i - 1), 1.0}, {vel_base(n, i), -2.0}, {vel_base(n, i + 1), 1.0}}});
      }
      if (o.smooth_omega) {
        for (int i = 1; i + 1 < m; ++i) {
          rs.push_back(
              {t.velocities[i - 1][1] - 2.0 * t.velocities[i][1] + t.velocities[i + 1][1],
               o.lambda_reg,
               {{vel_base(n, i - 1) + 1, 1.0}, {vel_base(n, i) + 1, -2.0}, {vel_base(n, i + 1) + 1, 1.0}}});
        }
      } else {
        for (int i = 1; i + 1 < n; ++i) {
          rs.push_back({t.states[i - 1].theta - 2.0 * t.states[i].theta + t.states[i + 1].theta,
                        o.lambda_reg,
                        {{state_base(i - 1) + 2, 1.0},
                         {state_base(i) + 2, -2.0},
                         {state_base(i + 1) + 2, 1.0}}});
        }
      }
    }
    return rs;
  };

  const auto robust_cost = [&](const std::vector<Residual>& rs) {
    double c = 0.0;
    for (const auto& r : rs) {
      const double a = std::abs(r.value);
      c += r.weight * (a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta));
    }
    return c;
  };

  Eigen::VectorXd p = pack(*track);
  UnicycleTrack cur = *track;
  double mu = 1e-4;
  auto rs = residuals(cur);
  double cost = robust_cost(rs);

  for (int it = 0; it < opt.iterations; ++it) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (const auto& r : rs) {
      const double a = std::abs(r.value);
      const double w = r.weight * (a <= delta ? 1.0 : delta / a);
      for (const auto& [ci, vi] : r.jac) {
        b[ci] += w * vi * r.value;
        for (const auto& [cj, vj] : r.jac) h(ci, cj) += w * vi * vj;
      }
    }
    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += mu;
    const Eigen::VectorXd step = damped.ldlt().solve(-b);
    if (!step.allFinite()) break;

    Eigen::VectorXd p_new = p + step;
    UnicycleTrack trial = cur;
    unpack(p_new, &trial);
    auto rs_new = residuals(trial);
    const double cost_new = robust_cost(rs_new);
    if (cost_new < cost) {
      p = p_new;
      cur = trial;
      rs = std::move(rs_new);
      cost = cost_new;
      mu = std::max(mu * 0.5, 1e-10);
      if (step.norm() < 1e-12) break;
    } else {
      mu *= 10.0;
      if (mu > 1e8) break;
    }
  }
  *track = cur;
}

}  // namespace

TrackGrads TrackGrads::zeros_like(const UnicycleTrack& t) {
  TrackGrads g;
  g.states.assign(t.states.size(), Eigen::Vector3d::Zero());
  g.heights.assign(t.heights.size(), 0.0);
  g.velocities.assign(t.velocities.size(), Eigen::Vector2d::Zero());
  return g;
}

void TrackGrads::add_scaled(const TrackGrads& other, double scale) {
  for (std::size_t i = 0; i < states.size(); ++i) states[i] += scale * other.states[i];
  for (std::size_t i = 0; i < heights.size(); ++i) heights[i] += scale * other.heights[i];
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    velocities[i] += scale * other.velocities[i];
  }
}

double loss_track(const UnicycleTrack& track, const NoisyBoxTrack& obs, TrackGrads* grad) {
  if (track.timestamps.size() != obs.timestamps.size()) {
    throw std::invalid_argument("loss_track: frame counts differ");
  }
  CompensatedSum total;
  for (std::size_t i = 0; i < track.states.size(); ++i) {
    if (!obs.is_valid(i)) continue;
    const double dx = track.states[i].x - obs.obs[i].x;
    const double dy = track.states[i].y - obs.obs[i].y;
    total.add(std::abs(dx));
    total.add(std::abs(dy));
    if (grad) {
      grad->states[i][0] += sgn(dx);
      grad->states[i][1] += sgn(dy);
    }
  }
  return total.result();
}

double loss_unicycle(const UnicycleTrack& track, TrackGrads* grad) {
  CompensatedSum total;
  for (std::size_t i = 0; i + 1 < track.states.size(); ++i) {
    const double dt = track.timestamps[i + 1] - track.timestamps[i];
    const auto ir =
        interval_residuals(track.states[i], track.states[i + 1], track.velocities[i], dt);
    total.add(std::abs(ir.r1));
    total.add(std::abs(ir.r2));
    total.add(std::abs(ir.r3));
    if (grad) {
      const Eigen::Vector3d s(sgn(ir.r1), sgn(ir.r2), sgn(ir.r3));
      const Eigen::Matrix<double, 1, 8> row = s.transpose() * ir.d;
      grad->states[i] += row.segment<3>(0).transpose();
      grad->states[i + 1] += row.segment<3>(3).transpose();
      grad->velocities[i] += row.segment<2>(6).transpose();
    }
  }
  return total.result();
}

double loss_smooth(const UnicycleTrack& track, bool smooth_omega, TrackGrads* grad) {
  CompensatedSum total;
  const int m = static_cast<int>(track.velocities.size());
  for (int i = 1; i + 1 < m; ++i) {
    const double d = track.velocities[i - 1][0] - 2.0 * track.velocities[i][0] +
                     track.velocities[i + 1][0];
    total.add(std::abs(d));
    if (grad) {
      const double s = sgn(d);
      grad->velocities[i - 1][0] += s;
      grad->velocities[i][0] -= 2.0 * s;
      grad->velocities[i + 1][0] += s;
    }
  }
  if (smooth_omega) {
    for (int i = 1; i + 1 < m; ++i) {
      const double d = track.velocities[i - 1][1] - 2.0 * track.velocities[i][1] +
                       track.velocities[i + 1][1];
      total.add(std::abs(d));
      if (grad) {
        const double s = sgn(d);
        grad->velocities[i - 1][1] += s;
        grad->velocities[i][1] -= 2.0 * s;
        grad->velocities[i + 1][1] += s;
      }
    }
  } else {
    const int n = static_cast<int>(track.states.size());
    for (int i = 1; i + 1 < n; ++i) {
      const double d =
          track.states[i - 1].theta - 2.0 * track.states[i].theta + track.states[i + 1].theta;
      total.add(std::abs(d));
      if (grad) {
        const double s = sgn(d);
        grad->states[i - 1][2] += s;
        grad->states[i][2] -= 2.0 * s;
        grad->states[i + 1][2] += s;
      }
    }
  }
  return total.result();
}

UnicycleTrack fit_track(const NoisyBoxTrack& obs, const FitOptions& opt) {
  UnicycleTrack track = initial_track(obs);
  if (opt.mode == FitMode::kNone) return track;

  Objective o;
  o.lambda_t = opt.lambda_t;
  o.lambda_uni = opt.mode == FitMode::kUnicycle ? opt.lambda_uni : 0.0;
  o.lambda_reg = opt.mode == FitMode::kUnicycle ? opt.lambda_reg : 0.0;
  o.smooth_omega = opt.smooth_omega;

  if (opt.method == FitMethod::kGaussNewton) {
    gauss_newton(&track, obs, o, opt);
  } else {
    gradient_descent(&track, obs, o, opt);
  }
  return track;
}

TrackErrors track_errors(const UnicycleTrack& est, const UnicycleTrack& gt) {
  TrackErrors e;
  int count = 0;
  for (std::size_t i = 0; i < est.timestamps.size(); ++i) {
    for (std::size_t j = 0; j < gt.timestamps.size(); ++j) {
      if (std::abs(est.timestamps[i] - gt.timestamps[j]) > kTimeMatchTol) continue;
      const TrackPose pe{est.states[i].x, est.states[i].y, est.heights[i], est.states[i].theta};
      const TrackPose pg{gt.states[j].x, gt.states[j].y, gt.heights[j], gt.states[j].theta};
      const PoseError err =
          pose_error(pe.rotation(), pe.translation(), pg.rotation(), pg.translation());
      e.rotation += err.rotation;
      e.translation += err.translation;
      ++count;
      break;
    }
  }
  if (count > 0) {
    e.rotation /= count;
    e.translation /= count;
  }
  return e;
}

}  // namespace kinesplat
