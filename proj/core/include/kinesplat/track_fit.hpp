// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "kinesplat/scene.hpp"

namespace kinesplat {

// Per-timestamp rigid-box observations; invalid entries carry no data term.
struct NoisyBoxTrack {
  std::vector<double> timestamps;
  std::vector<UnicycleState> obs;
  std::vector<double> heights;
  std::vector<std::uint8_t> valid;  // empty = all valid
  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
};

// Gradients with respect to every track parameter; layouts mirror
// UnicycleTrack (states as (x, y, theta) triples).
struct TrackGrads {
  std::vector<Eigen::Vector3d> states;
  std::vector<double> heights;
  std::vector<Eigen::Vector2d> velocities;

  static TrackGrads zeros_like(const UnicycleTrack& t);
  void add_scaled(const TrackGrads& other, double scale);
};

// Sum over valid frames of |x - x_obs| + |y - y_obs|.
double loss_track(const UnicycleTrack& track, const NoisyBoxTrack& obs,
                  TrackGrads* grad = nullptr);

// Sum over intervals of the absolute kinematic residuals: the pose reached by
// rolling the interval's (v, omega) forward must match the stored next state.
// Near omega = 0 the arc terms switch to their series expansion.
double loss_unicycle(const UnicycleTrack& track, TrackGrads* grad = nullptr);

// Sum of absolute second differences of the speed sequence plus the heading
// sequence; smooth_omega replaces the heading term with the turn-rate term.
double loss_smooth(const UnicycleTrack& track, bool smooth_omega = false,
                   TrackGrads* grad = nullptr);

enum class FitMode { kNone, kPerFrame, kUnicycle };
enum class FitMethod { kGradientDescent, kGaussNewton };

struct FitOptions {
  FitMode mode = FitMode::kUnicycle;
  FitMethod method = FitMethod::kGradientDescent;
  double lambda_t = 0.1;
  double lambda_uni = 0.1;
  double lambda_reg = 0.1;
  int iterations = 4000;
  double lr = 0.02;
  double lr_decay = 0.9995;     // per-iteration exponential decay
  double huber_delta = 0.1;     // robust width for the least-squares method
  bool smooth_omega = false;    // second-difference the turn rate, not heading
};

// Rectifies noisy per-frame box observations. kNone copies the observations,
// kPerFrame optimizes each frame against its data term only, kUnicycle fits
// states and interval velocities under the full objective.
UnicycleTrack fit_track(const NoisyBoxTrack& obs, const FitOptions& opt);

struct TrackErrors {
  double rotation = 0.0;     // mean geodesic yaw error, radians
  double translation = 0.0;  // mean 3D center distance
};

// Mean pose errors over timestamps shared by both tracks (tolerance 1e-9).
TrackErrors track_errors(const UnicycleTrack& est, const UnicycleTrack& gt);

}  // namespace kinesplat
