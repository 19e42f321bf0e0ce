// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "kinesplat/losses.hpp"
#include "kinesplat/track_fit.hpp"

using namespace kinesplat;

namespace {

RasterD constant_raster(int h, int w, int c, double value) { return RasterD(h, w, c, value); }

RasterD random_raster(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RasterD r(h, w, c);
  for (auto& v : r.v) v = u(rng);
  return r;
}

// Central difference of a raster loss with respect to a few coordinates.
template <class Loss>
void check_raster_grad(const RasterD& x, const Loss& loss, const RasterD& grad, double h,
                       double tol, int stride = 37) {
  for (std::size_t i = 0; i < x.v.size(); i += static_cast<std::size_t>(stride)) {
    RasterD hi = x, lo = x;
    hi.v[i] += h;
    lo.v[i] -= h;
    const double fd = (loss(hi) - loss(lo)) / (2.0 * h);
    CHECK(std::abs(grad.v[i] - fd) < tol);
  }
}

UnicycleTrack exact_test_track(int frames, double v, double w) {
  UnicycleTrack t;
  t.timestamps.resize(static_cast<std::size_t>(frames));
  t.states.resize(static_cast<std::size_t>(frames));
  t.heights.assign(static_cast<std::size_t>(frames), 0.4);
  t.states[0] = {0.2, -0.1, 0.3};
  for (int i = 0; i < frames; ++i) t.timestamps[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i + 1 < frames; ++i) {
    t.velocities.push_back(Eigen::Vector2d(v, w));
    t.states[static_cast<std::size_t>(i) + 1] =
        propagate_unicycle(t.states[static_cast<std::size_t>(i)], v, w, 1.0);
  }
  return t;
}

NoisyBoxTrack obs_of(const UnicycleTrack& t) {
  NoisyBoxTrack obs;
  obs.timestamps = t.timestamps;
  obs.obs = t.states;
  obs.heights = t.heights;
  return obs;
}

}  // namespace

TEST_CASE("image loss vanishes on identical rasters") {
  const RasterD a = random_raster(24, 20, 3, 1);
  RasterD grad;
  CHECK(loss_image(a, a, 0.2, &grad) == doctest::Approx(0.0).epsilon(1e-12));
  double max_g = 0.0;
  for (double g : grad.v) max_g = std::max(max_g, std::abs(g));
  CHECK(max_g < 1e-9);  // both terms are stationary at equality
}

TEST_CASE("pure absolute term measures the mean gap") {
  const RasterD zeros = constant_raster(8, 8, 3, 0.0);
  const RasterD ones = constant_raster(8, 8, 3, 1.0);
  CHECK(loss_image(zeros, ones, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pure structural term vanishes on identical rasters") {
  const RasterD a = random_raster(16, 16, 3, 2);
  CHECK(loss_image(a, a, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("image loss gradient matches central differences") {
  const RasterD x = random_raster(20, 16, 3, 3, 0.2, 0.8);
  RasterD target = x;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.15, 0.4);
  // Keep residuals away from zero so the absolute term stays smooth.
  for (std::size_t i = 0; i < target.v.size(); ++i) {
    target.v[i] += (i % 2 == 0 ? 1.0 : -1.0) * u(rng);
  }
  RasterD grad;
  loss_image(x, target, 0.2, &grad);
  check_raster_grad(
      x, [&](const RasterD& r) { return loss_image(r, target, 0.2); }, grad, 1e-6, 1e-6);
}

TEST_CASE("semantic loss reproduces the textbook cross-entropy values") {
  const int hw = 6;
  RasterD onehot(hw, hw, 2);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) onehot.at(y, x, 0) = 1.0;
  }
  RasterD exact(hw, hw, 2);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) exact.at(y, x, 0) = 1.0;
  }
  CHECK(loss_semantic(exact, onehot, {}) == doctest::Approx(0.0).epsilon(1e-12));

  const RasterD half = constant_raster(hw, hw, 2, 0.5);
  CHECK(loss_semantic(half, onehot, {}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  RasterD uniform19 = constant_raster(hw, hw, 19, 1.0 / 19.0);
  RasterD onehot19(hw, hw, 19);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) onehot19.at(y, x, (y * hw + x) % 19) = 1.0;
  }
  CHECK(loss_semantic(uniform19, onehot19, {}) == doctest::Approx(std::log(19.0)).epsilon(1e-12));

  // Zero predicted mass on the true class hits the probability clamp.
  RasterD wrong(hw, hw, 2);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) wrong.at(y, x, 1) = 1.0;
  }
  CHECK(loss_semantic(wrong, onehot, {}) == doctest::Approx(-std::log(1e-8)).epsilon(1e-12));
}

TEST_CASE("semantic loss averages over the mask only") {
  RasterD onehot(2, 2, 2);
  for (int i = 0; i < 4; ++i) onehot.at(i / 2, i % 2, 0) = 1.0;
  RasterD probs = constant_raster(2, 2, 2, 0.5);
  probs.at(0, 0, 0) = 1.0;  // the only unmasked pixel is exact
  const std::vector<std::uint8_t> mask = {1, 0, 0, 0};
  CHECK(loss_semantic(probs, onehot, mask) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<std::uint8_t> other = {0, 1, 1, 1};
  CHECK(loss_semantic(probs, onehot, other) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("semantic loss gradient matches central differences") {
  const RasterD probs = random_raster(10, 8, 3, 5, 0.2, 0.8);
  RasterD onehot(10, 8, 3);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 8; ++x) onehot.at(y, x, (y + x) % 3) = 1.0;
  }
  RasterD grad;
  loss_semantic(probs, onehot, {}, &grad);
  check_raster_grad(
      probs, [&](const RasterD& r) { return loss_semantic(r, onehot, {}); }, grad, 1e-7, 1e-6,
      11);
}

TEST_CASE("flow loss is the mean absolute component error") {
  const RasterD target = random_raster(12, 10, 2, 6, -2.0, 2.0);
  CHECK(loss_flow(target, target, {}) == 0.0);

  RasterD off = target;
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 10; ++x) {
      off.at(y, x, 0) += 1.0;
      off.at(y, x, 1) += 2.0;
    }
  }
  CHECK(loss_flow(off, target, {}) == doctest::Approx(3.0).epsilon(1e-12));

  std::vector<std::uint8_t> mask(12 * 10, 0);
  for (int i = 0; i < 60; ++i) mask[static_cast<std::size_t>(i)] = 1;
  RasterD half = target;
  for (int i = 0; i < 120; ++i) {
    const int y = i / 10, x = i % 10;
    half.at(y, x, 0) += (i < 60) ? 0.5 : 100.0;  // masked-out pixels never count
  }
  CHECK(loss_flow(half, target, mask) == doctest::Approx(0.5).epsilon(1e-12));

  RasterD grad;
  RasterD noisy = target;
  for (std::size_t i = 0; i < noisy.v.size(); ++i) noisy.v[i] += (i % 2 == 0 ? 0.3 : -0.4);
  loss_flow(noisy, target, {}, &grad);
  check_raster_grad(
      noisy, [&](const RasterD& r) { return loss_flow(r, target, {}); }, grad, 1e-6, 1e-7, 17);
}

TEST_CASE("depth loss is the mean squared gap over usable pixels") {
  const RasterD target = random_raster(8, 8, 1, 7, 1.0, 9.0);
  CHECK(loss_depth(target, target, {}) == 0.0);

  RasterD off = target;
  for (auto& v : off.v) v += 0.5;
  CHECK(loss_depth(off, target, {}) == doctest::Approx(0.25).epsilon(1e-12));

  RasterD holes = off;
  holes.at(0, 0, 0) = std::numeric_limits<double>::infinity();  // skipped, not poisoned
  const double got = loss_depth(holes, target, {});
  CHECK(std::isfinite(got));
  CHECK(got == doctest::Approx(0.25).epsilon(1e-12));

  RasterD grad;
  loss_depth(off, target, {}, &grad);
  check_raster_grad(
      off, [&](const RasterD& r) { return loss_depth(r, target, {}); }, grad, 1e-6, 1e-6, 13);
}

TEST_CASE("track data term sums planar absolute offsets over valid frames") {
  const UnicycleTrack t = exact_test_track(6, 0.7, 0.15);
  NoisyBoxTrack obs = obs_of(t);
  CHECK(loss_track(t, obs) == 0.0);

  obs.obs[2].x -= 3.0;
  obs.obs[2].y += 4.0;
  CHECK(loss_track(t, obs) == doctest::Approx(7.0).epsilon(1e-12));

  obs.valid.assign(6, 1);
  obs.valid[2] = 0;  // masked frames carry no data term
  CHECK(loss_track(t, obs) == 0.0);
}

TEST_CASE("kinematic residual vanishes exactly on arc-consistent tracks") {
  CHECK(loss_unicycle(exact_test_track(8, 0.7, 0.15)) < 1e-12);
  CHECK(loss_unicycle(exact_test_track(8, 1.2, 0.0)) < 1e-12);    // straight branch
  CHECK(loss_unicycle(exact_test_track(8, 0.9, 1e-7)) < 1e-12);   // series branch
  CHECK(loss_unicycle(exact_test_track(5, 0.0, 0.3)) < 1e-12);    // turning in place
}

TEST_CASE("state perturbations surface in exactly the touching intervals") {
  const double delta = 0.3;
  UnicycleTrack mid = exact_test_track(7, 0.6, 0.1);
  mid.states[3].x += delta;  // interior: incoming and outgoing interval
  CHECK(loss_unicycle(mid) == doctest::Approx(2.0 * delta).epsilon(1e-9));

  UnicycleTrack last = exact_test_track(7, 0.6, 0.1);
  last.states[6].x += delta;  // terminal: incoming interval only
  CHECK(loss_unicycle(last) == doctest::Approx(delta).epsilon(1e-9));
}

TEST_CASE("smoothness penalizes second differences of speed and heading") {
  CHECK(loss_smooth(exact_test_track(7, 0.8, 0.0)) == 0.0);   // constant speed, heading
  CHECK(loss_smooth(exact_test_track(7, 0.8, 0.25)) ==
        doctest::Approx(0.0).epsilon(1e-12));  // linear heading ramp

  UnicycleTrack t = exact_test_track(4, 1.0, 0.0);
  t.velocities[0][0] = 1.0;
  t.velocities[1][0] = 2.0;
  t.velocities[2][0] = 4.0;
  CHECK(loss_smooth(t) == doctest::Approx(1.0).epsilon(1e-12));

  // The turn-rate variant swaps the heading term for omega second differences.
  UnicycleTrack w = exact_test_track(5, 1.0, 0.0);
  w.velocities[0][1] = 0.1;
  w.velocities[1][1] = 0.3;
  w.velocities[2][1] = 0.2;
  w.velocities[3][1] = 0.2;
  const double want = std::abs(0.1 - 2.0 * 0.3 + 0.2) + std::abs(0.3 - 2.0 * 0.2 + 0.2);
  CHECK(loss_smooth(w, true) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("track loss gradients match central differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.2);
  UnicycleTrack t = exact_test_track(6, 0.7, 0.12);
  for (auto& s : t.states) {
    s.x += n(rng);
    s.y += n(rng);
    s.theta += n(rng);
  }
  for (auto& v : t.velocities) v += Eigen::Vector2d(n(rng), n(rng));
  NoisyBoxTrack obs = obs_of(exact_test_track(6, 0.7, 0.12));

  auto eval = [&](const UnicycleTrack& track) {
    return loss_track(track, obs) + loss_unicycle(track) + loss_smooth(track);
  };
  TrackGrads grad = TrackGrads::zeros_like(t);
  {
    TrackGrads g1 = TrackGrads::zeros_like(t);
    loss_track(t, obs, &g1);
    grad.add_scaled(g1, 1.0);
    TrackGrads g2 = TrackGrads::zeros_like(t);
    loss_unicycle(t, &g2);
    grad.add_scaled(g2, 1.0);
    TrackGrads g3 = TrackGrads::zeros_like(t);
    loss_smooth(t, false, &g3);
    grad.add_scaled(g3, 1.0);
  }

  const double h = 1e-7;
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      UnicycleTrack hi = t, lo = t;
      double* ph = k == 0 ? &hi.states[i].x : (k == 1 ? &hi.states[i].y : &hi.states[i].theta);
      double* pl = k == 0 ? &lo.states[i].x : (k == 1 ? &lo.states[i].y : &lo.states[i].theta);
      *ph += h;
      *pl -= h;
      const double fd = (eval(hi) - eval(lo)) / (2.0 * h);
      CHECK(std::abs(grad.states[i][k] - fd) < 1e-6);
    }
  }
  for (std::size_t i = 0; i < t.velocities.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      UnicycleTrack hi = t, lo = t;
      hi.velocities[i][k] += h;
      lo.velocities[i][k] -= h;
      const double fd = (eval(hi) - eval(lo)) / (2.0 * h);
      CHECK(std::abs(grad.velocities[i][k] - fd) < 1e-6);
    }
  }
}

TEST_CASE("default loss weights compose the advertised total") {
  const LossWeights w;
  CHECK(w.lambda_ssim == 0.2);
  CHECK(w.lambda_s == 0.01);
  CHECK(w.lambda_f == 0.01);
  CHECK(w.lambda_t == 0.1);
  CHECK(w.lambda_uni == 0.1);
  CHECK(w.lambda_reg == 0.1);
  // A unit semantic term weighted in isolation contributes exactly lambda_s.
  const double total = 0.0 + w.lambda_s * 1.0;
  CHECK(total == doctest::Approx(0.01).epsilon(1e-15));
}
