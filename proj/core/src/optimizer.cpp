// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/optimizer.hpp"

#include <cmath>

namespace kinesplat {

Eigen::Quaterniond exp_quaternion(const Eigen::Vector3d& v) {
  const double ang = v.norm();
  if (ang < 1e-12) {
    // First-order form; the normalization absorbs the truncation.
    return Eigen::Quaterniond(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z()).normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(ang, v / ang));
}

bool sgd_step(SceneGraph* scene, FrameCamera* cam, const ParamGrads& grads,
              const LearningRates& lr, OptState* state, std::string* error) {
  std::string where;
  if (!grads.all_finite(&where)) {
    if (error) *error = "non-finite gradient at " + where;
    return false;
  }

  const ParamGrads* g = &grads;
  if (lr.momentum > 0.0) {
    if (!state->has_velocity) {
      state->velocity = ParamGrads::zeros_like(*scene);
      state->has_velocity = true;
    }
    ParamGrads& v = state->velocity;
    // v <- momentum * v + g, then step along v.
    ParamGrads scaled = ParamGrads::zeros_like(*scene);
    scaled.add_scaled(v, lr.momentum);
    scaled.add_scaled(grads, 1.0);
    v = std::move(scaled);
    g = &v;
  }

  const double track_scale = std::pow(lr.track_decay, state->step);
  const auto step_gaussian = [&](Gaussian3D* p, const GaussianGrads& d) {
    p->mu -= lr.mu * d.mu;
    if (lr.rot != 0.0 && d.rot.cwiseAbs().maxCoeff() != 0.0) {
      // Renormalize only once the norm has measurably drifted: an
      // unconditional normalize perturbs the coefficients by an ulp even for
      // vanishing gradients, which slowly walks parameters away from an
      // otherwise exact stationary point.
      p->rotation = exp_quaternion(-lr.rot * d.rot) * p->rotation;
      const double n2 = p->rotation.squaredNorm();
      if (std::abs(n2 - 1.0) > 1e-12) p->rotation.normalize();
    }
    p->log_scale -= lr.log_scale * d.log_scale;
    p->opacity_logit -= lr.opacity * d.opacity_logit;
    for (std::size_t k = 0; k < p->sh.size(); ++k) p->sh[k] -= lr.sh * d.sh[k];
    if (p->logits.size() > 0) p->logits -= lr.logits * d.logits;
  };

  for (std::size_t i = 0; i < scene->static_gaussians.size(); ++i) {
    step_gaussian(&scene->static_gaussians[i], g->statics[i]);
  }
  for (std::size_t o = 0; o < scene->objects.size(); ++o) {
    DynamicObject& obj = scene->objects[o];
    for (std::size_t i = 0; i < obj.canonical.size(); ++i) {
      step_gaussian(&obj.canonical[i], g->objects[o][i]);
    }
    const TrackGrads& tg = g->tracks[o];
    for (std::size_t i = 0; i < obj.track.states.size(); ++i) {
      obj.track.states[i].x -= lr.track_state * track_scale * tg.states[i][0];
      obj.track.states[i].y -= lr.track_state * track_scale * tg.states[i][1];
      obj.track.states[i].theta -= lr.track_state * track_scale * tg.states[i][2];
    }
    for (std::size_t i = 0; i < obj.track.heights.size(); ++i) {
      obj.track.heights[i] -= lr.track_height * track_scale * tg.heights[i];
    }
    for (std::size_t i = 0; i < obj.track.velocities.size(); ++i) {
      obj.track.velocities[i] -= lr.track_velocity * track_scale * tg.velocities[i];
    }
  }
  if (cam) {
    cam->exposure_A -= lr.exposure_A * g->camera.exposure_A;
    cam->exposure_b -= lr.exposure_b * g->camera.exposure_b;
  }
  ++state->step;
  return true;
}

}  // namespace kinesplat
