// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "kinesplat/backward.hpp"

namespace kinesplat {

// Per-parameter-class step sizes. Track rates decay exponentially with the
// step count; a zero rate freezes its class.
struct LearningRates {
  double mu = 2e-3;
  double rot = 1e-3;
  double log_scale = 2e-3;
  double opacity = 2.5e-2;
  double sh = 2.5e-3;
  double logits = 2.5e-2;
  double exposure_A = 1e-3;
  double exposure_b = 1e-3;
  double track_state = 1e-2;
  double track_height = 1e-2;
  double track_velocity = 1e-2;
  double track_decay = 1.0;  // multiplier applied per step to the track rates
  double momentum = 0.0;     // 0 = plain gradient descent
};

struct OptState {
  ParamGrads velocity;  // momentum buffer, allocated on first use
  int step = 0;
  bool has_velocity = false;
};

// One descent step over every parameter carried by `grads`. Rotations update
// on the left tangent (q <- exp(-lr g) * q, re-normalized). `cam`, when given,
// receives the exposure step. Returns false without touching anything if a
// gradient is not finite; `error` then names the parameter.
bool sgd_step(SceneGraph* scene, FrameCamera* cam, const ParamGrads& grads,
              const LearningRates& lr, OptState* state, std::string* error = nullptr);

// Unit quaternion exponential of a rotation vector.
Eigen::Quaterniond exp_quaternion(const Eigen::Vector3d& v);

}  // namespace kinesplat
