// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kinesplat {

namespace {

bool finite(const Eigen::Vector3d& v) { return v.allFinite(); }

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

}  // namespace

int Gaussian3D::sh_degree() const {
  const int n = static_cast<int>(sh.size());
  int d = 0;
  while ((d + 1) * (d + 1) < n) ++d;
  return d;
}

Eigen::Matrix3d covariance_of(const Gaussian3D& g) {
  const Eigen::Matrix3d r = g.rotation.toRotationMatrix();
  const Eigen::Vector3d s2 = (2.0 * g.log_scale).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

Eigen::Matrix3d TrackPose::rotation() const {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

Eigen::Quaterniond yaw_quaternion(double theta) {
  return Eigen::Quaterniond(std::cos(0.5 * theta), 0.0, 0.0, std::sin(0.5 * theta));
}

UnicycleState propagate_unicycle(const UnicycleState& s, double v, double w, double tau,
                                 double w_eps) {
  UnicycleState n;
  n.theta = s.theta + tau * w;
  if (std::abs(w) < w_eps) {
    const double c = std::cos(s.theta), si = std::sin(s.theta);
    n.x = s.x + v * tau * (c - 0.5 * tau * w * si);
    n.y = s.y + v * tau * (si + 0.5 * tau * w * c);
  } else {
    const double r = v / w;
    n.x = s.x + r * (std::sin(n.theta) - std::sin(s.theta));
    n.y = s.y - r * (std::cos(n.theta) - std::cos(s.theta));
  }
  return n;
}

PropagateJac propagate_unicycle_jac(const UnicycleState& s, double v, double w, double tau,
                                    double w_eps) {
  PropagateJac out;
  out.next = propagate_unicycle(s, v, w, tau, w_eps);
  Eigen::Matrix<double, 3, 5>& d = out.d;
  d.setZero();
  d(0, 0) = 1.0;
  d(1, 1) = 1.0;
  d(2, 2) = 1.0;
  d(2, 4) = tau;
  if (std::abs(w) < w_eps) {
    const double c = std::cos(s.theta), si = std::sin(s.theta);
    d(0, 2) = v * tau * (-si - 0.5 * tau * w * c);
    d(0, 3) = tau * (c - 0.5 * tau * w * si);
    d(0, 4) = -0.5 * v * tau * tau * si;
    d(1, 2) = v * tau * (c - 0.5 * tau * w * si);
    d(1, 3) = tau * (si + 0.5 * tau * w * c);
    d(1, 4) = 0.5 * v * tau * tau * c;
  } else {
    const double th1 = out.next.theta;
    const double r = v / w;
    const double ds = std::sin(th1) - std::sin(s.theta);
    const double dc = std::cos(th1) - std::cos(s.theta);
    d(0, 2) = r * (std::cos(th1) - std::cos(s.theta));
    d(0, 3) = ds / w;
    d(0, 4) = -v / (w * w) * ds + r * std::cos(th1) * tau;
    d(1, 2) = r * (std::sin(th1) - std::sin(s.theta));
    d(1, 3) = -dc / w;
    d(1, 4) = v / (w * w) * dc + r * std::sin(th1) * tau;
  }
  return out;
}

namespace {

constexpr double kTimestampTol = 1e-9;

// Index of the stored timestamp t matches, or -1.
int exact_index(const UnicycleTrack& track, double t) {
  for (std::size_t i = 0; i < track.timestamps.size(); ++i) {
    if (std::abs(track.timestamps[i] - t) < kTimestampTol) return static_cast<int>(i);
  }
  return -1;
}

void check_horizon(const UnicycleTrack& track, double t, double horizon) {
  const double lo = track.timestamps.front();
  const double hi = track.timestamps.back();
  if (t < lo - horizon || t > hi + horizon) {
    throw std::out_of_range("pose query outside track horizon");
  }
}

// Segment whose velocities drive propagation toward t; clamped at the ends so
// extrapolation reuses the nearest interval.
int segment_of(const UnicycleTrack& track, double t) {
  const int n = static_cast<int>(track.timestamps.size());
  int s = static_cast<int>(std::upper_bound(track.timestamps.begin(), track.timestamps.end(), t) -
                           track.timestamps.begin()) -
          1;
  s = std::clamp(s, 0, n - 2);
  return s;
}

}  // namespace

TrackPose pose_at(const UnicycleTrack& track, double t, PoseInterp interp, double horizon) {
  PoseAtJac jac;
  if (interp == PoseInterp::kUnicycle) return pose_at_jac(track, t, &jac, horizon);

  validate_track(track);
  check_horizon(track, t, horizon);
  TrackPose p;
  const int e = exact_index(track, t);
  if (e >= 0) {
    p.x = track.states[e].x;
    p.y = track.states[e].y;
    p.z = track.heights[e];
    p.theta = track.states[e].theta;
    return p;
  }
  const int s = segment_of(track, t);
  const double dt = track.timestamps[s + 1] - track.timestamps[s];
  const double u = (t - track.timestamps[s]) / dt;
  p.x = (1.0 - u) * track.states[s].x + u * track.states[s + 1].x;
  p.y = (1.0 - u) * track.states[s].y + u * track.states[s + 1].y;
  p.theta = (1.0 - u) * track.states[s].theta + u * track.states[s + 1].theta;
  p.z = (1.0 - u) * track.heights[s] + u * track.heights[s + 1];
  return p;
}

TrackPose pose_at_jac(const UnicycleTrack& track, double t, PoseAtJac* jac, double horizon) {
  validate_track(track);
  check_horizon(track, t, horizon);

  TrackPose p;
  const int e = exact_index(track, t);
  if (e >= 0) {
    p.x = track.states[e].x;
    p.y = track.states[e].y;
    p.z = track.heights[e];
    p.theta = track.states[e].theta;
    jac->seg = e;
    jac->vseg = std::min(e, static_cast<int>(track.velocities.size()) - 1);
    jac->exact = true;
    jac->dpose.setZero();
    jac->dpose(0, 0) = jac->dpose(1, 1) = jac->dpose(2, 2) = 1.0;
    jac->zi0 = jac->zi1 = e;
    jac->dz0 = 1.0;
    jac->dz1 = 0.0;
    return p;
  }
  if (track.states.size() < 2) throw std::out_of_range("cannot propagate a single-state track");

  const int n = static_cast<int>(track.timestamps.size());
  const int s = segment_of(track, t);
  // Nearest earlier state; past the end that is the last state, before the
  // start it is the first (run backwards with a negative step).
  const int origin = (t > track.timestamps.back()) ? n - 1 : s;
  const double tau = t - track.timestamps[origin];
  const Eigen::Vector2d vw = track.velocities[s];
  const PropagateJac pj =
      propagate_unicycle_jac(track.states[origin], vw.x(), vw.y(), tau, kOmegaEps);
  p.x = pj.next.x;
  p.y = pj.next.y;
  p.theta = pj.next.theta;

  const double dtz = track.timestamps[s + 1] - track.timestamps[s];
  const double u = (t - track.timestamps[s]) / dtz;
  p.z = (1.0 - u) * track.heights[s] + u * track.heights[s + 1];

  jac->seg = origin;
  jac->vseg = s;
  jac->exact = false;
  jac->dpose = pj.d;
  jac->zi0 = s;
  jac->zi1 = s + 1;
  jac->dz0 = 1.0 - u;
  jac->dz1 = u;
  return p;
}

WorldView instantiate_world(const SceneGraph& scene, double t, PoseInterp interp,
                            double horizon) {
  WorldView view;
  std::size_t total = scene.static_gaussians.size();
  for (const auto& obj : scene.objects) total += obj.canonical.size();
  view.gaussians.reserve(total);
  view.sources.reserve(total);
  view.poses.reserve(scene.objects.size());

  for (std::size_t i = 0; i < scene.static_gaussians.size(); ++i) {
    view.gaussians.push_back(scene.static_gaussians[i]);
    view.sources.push_back({-1, static_cast<int>(i)});
  }
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const DynamicObject& obj = scene.objects[o];
    const TrackPose pose = pose_at(obj.track, t, interp, horizon);
    view.poses.push_back(pose);
    const Eigen::Matrix3d r = pose.rotation();
    const Eigen::Vector3d tr = pose.translation();
    const Eigen::Quaterniond qz = yaw_quaternion(pose.theta);
    for (std::size_t i = 0; i < obj.canonical.size(); ++i) {
      Gaussian3D g = obj.canonical[i];
      g.mu = r * g.mu + tr;
      g.rotation = qz * g.rotation;
      view.gaussians.push_back(std::move(g));
      view.sources.push_back({static_cast<int>(o), static_cast<int>(i)});
    }
  }
  return view;
}

void validate_track(const UnicycleTrack& track) {
  if (track.timestamps.empty()) fail("track has no timestamps");
  if (track.states.size() != track.timestamps.size()) fail("track states/timestamps mismatch");
  if (track.heights.size() != track.timestamps.size()) fail("track heights/timestamps mismatch");
  if (track.velocities.size() + 1 != track.timestamps.size()) {
    fail("track velocities must have one entry per interval");
  }
  for (std::size_t i = 1; i < track.timestamps.size(); ++i) {
    if (!(track.timestamps[i] > track.timestamps[i - 1])) {
      fail("track timestamps must be strictly increasing");
    }
  }
  for (const auto& s : track.states) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta)) {
      fail("track state not finite");
    }
  }
  for (double h : track.heights) {
    if (!std::isfinite(h)) fail("track height not finite");
  }
  for (const auto& v : track.velocities) {
    if (!v.allFinite()) fail("track velocity not finite");
  }
}

void validate_camera(const FrameCamera& cam) {
  if (!cam.K.allFinite() || !cam.R.allFinite() || !cam.t.allFinite()) fail("camera not finite");
  if (cam.width <= 0 || cam.height <= 0) fail("camera image size must be positive");
  if (std::abs(cam.K(1, 0)) > 0.0 || std::abs(cam.K(2, 0)) > 0.0 || std::abs(cam.K(2, 1)) > 0.0) {
    fail("K must be upper triangular");
  }
  if (!(cam.K(0, 0) > 0.0) || !(cam.K(1, 1) > 0.0)) fail("K focal entries must be positive");
  if ((cam.R * cam.R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    fail("camera R not orthonormal");
  }
  if (!cam.exposure_A.allFinite() || !cam.exposure_b.allFinite()) fail("exposure not finite");
}

namespace {

void validate_gaussian(const Gaussian3D& g, int class_count, const char* what) {
  if (!finite(g.mu)) fail(std::string(what) + ": mu not finite");
  if (!finite(g.log_scale)) fail(std::string(what) + ": log_scale not finite");
  if (!std::isfinite(g.opacity_logit)) fail(std::string(what) + ": opacity logit not finite");
  if (!g.rotation.coeffs().allFinite() || g.rotation.norm() < 1e-12) {
    fail(std::string(what) + ": quaternion degenerate");
  }
  if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
    fail(std::string(what) + ": quaternion not unit");
  }
  const std::size_t n = g.sh.size();
  int d = 0;
  while ((d + 1) * (d + 1) < static_cast<int>(n)) ++d;
  if (static_cast<std::size_t>((d + 1) * (d + 1)) != n || d > 3) {
    fail(std::string(what) + ": sh coefficient count must be (d+1)^2, d<=3");
  }
  for (const auto& c : g.sh) {
    if (!finite(c)) fail(std::string(what) + ": sh not finite");
  }
  if (g.logits.size() != class_count) fail(std::string(what) + ": logits size != class_count");
  if (!g.logits.allFinite()) fail(std::string(what) + ": logits not finite");
}

}  // namespace

void validate_scene(const SceneGraph& scene) {
  if (scene.class_count <= 0) fail("class_count must be positive");
  if (!finite(scene.background_color)) fail("background color not finite");
  for (const auto& g : scene.static_gaussians) validate_gaussian(g, scene.class_count, "static");
  for (const auto& obj : scene.objects) {
    for (const auto& g : obj.canonical) validate_gaussian(g, scene.class_count, "canonical");
    validate_track(obj.track);
  }
}

}  // namespace kinesplat
