// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "kinesplat/compensated.hpp"

namespace kinesplat {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;
constexpr double kSsimPeak = 1.0;
constexpr double kProbFloor = 1e-8;

std::array<double, kWindow> window_kernel() {
  std::array<double, kWindow> k{};
  const int half = kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    k[i] = std::exp(-0.5 * d * d / (kWindowSigma * kWindowSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Same-size separable correlation with zero padding. The kernel is symmetric,
// so correlation and convolution coincide.
void filter_plane(const std::vector<double>& in, int h, int w, std::vector<double>* tmp,
                  std::vector<double>* out) {
  static const std::array<double, kWindow> k = window_kernel();
  const int half = kWindow / 2;
  tmp->assign(in.size(), 0.0);
  out->assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int xx = x + i - half;
        if (xx >= 0 && xx < w) acc += k[i] * in[y * w + xx];
      }
      (*tmp)[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const int yy = y + i - half;
        if (yy >= 0 && yy < h) acc += k[i] * (*tmp)[yy * w + x];
      }
      (*out)[y * w + x] = acc;
    }
  }
}

void check_same_shape(const RasterD& a, const RasterD& b, const char* what) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw std::invalid_argument(std::string(what) + ": raster shapes differ");
  }
}

}  // namespace

double ssim(const RasterD& a, const RasterD& b, RasterD* grad_a) {
  check_same_shape(a, b, "ssim");
  const int h = a.h, w = a.w, c = a.c;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (grad_a) *grad_a = RasterD(h, w, c);

  const double c1 = (kSsimK1 * kSsimPeak) * (kSsimK1 * kSsimPeak);
  const double c2 = (kSsimK2 * kSsimPeak) * (kSsimK2 * kSsimPeak);

  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  std::vector<double> mu_x, mu_y, s_xx, s_yy, s_xy, tmp;
  std::vector<double> g_mu(n), g_sxx(n), g_sxy(n), f_mu, f_sxx, f_sxy;

  CompensatedSum total;
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < n; ++p) {
      x[p] = a.v[p * c + ch];
      y[p] = b.v[p * c + ch];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    filter_plane(x, h, w, &tmp, &mu_x);
    filter_plane(y, h, w, &tmp, &mu_y);
    filter_plane(xx, h, w, &tmp, &s_xx);
    filter_plane(yy, h, w, &tmp, &s_yy);
    filter_plane(xy, h, w, &tmp, &s_xy);

    for (std::size_t p = 0; p < n; ++p) {
      const double mx = mu_x[p], my = mu_y[p];
      const double vx = s_xx[p] - mx * mx;
      const double vy = s_yy[p] - my * my;
      const double vxy = s_xy[p] - mx * my;
      const double a1 = 2.0 * mx * my + c1;
      const double a2 = 2.0 * vxy + c2;
      const double b1 = mx * mx + my * my + c1;
      const double b2 = vx + vy + c2;
      const double denom = b1 * b2;
      const double s = (a1 * a2) / denom;
      total.add(s);
      if (grad_a) {
        // s = a1*a2 / (b1*b2) with a1, b1 functions of mu_x and a2, b2
        // functions of (s_xy, s_xx) through the centered moments.
        const double ds_da1 = a2 / denom;
        const double ds_da2 = a1 / denom;
        const double ds_db1 = -s / b1;
        const double ds_db2 = -s / b2;
        g_mu[p] = ds_da1 * 2.0 * my + ds_da2 * (-2.0 * my) + ds_db1 * 2.0 * mx +
                  ds_db2 * (-2.0 * mx);
        g_sxx[p] = ds_db2;
        g_sxy[p] = ds_da2 * 2.0;
      }
    }
    if (grad_a) {
      filter_plane(g_mu, h, w, &tmp, &f_mu);
      filter_plane(g_sxx, h, w, &tmp, &f_sxx);
      filter_plane(g_sxy, h, w, &tmp, &f_sxy);
      const double inv_n = 1.0 / (static_cast<double>(n) * c);
      for (std::size_t p = 0; p < n; ++p) {
        grad_a->v[p * c + ch] =
            inv_n * (f_mu[p] + 2.0 * x[p] * f_sxx[p] + y[p] * f_sxy[p]);
      }
    }
  }
  return total.result() / (static_cast<double>(n) * c);
}

double loss_image(const RasterD& rendered, const RasterD& target, double lambda_ssim,
                  RasterD* grad) {
  check_same_shape(rendered, target, "loss_image");
  const std::size_t n = rendered.v.size();
  if (grad) *grad = RasterD(rendered.h, rendered.w, rendered.c);

  CompensatedSum l1_sum;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rendered.v[i] - target.v[i];
    l1_sum.add(std::abs(d));
    if (grad) {
      grad->v[i] = (1.0 - lambda_ssim) * ((d > 0.0) - (d < 0.0)) / static_cast<double>(n);
    }
  }
  const double l1 = l1_sum.result() / static_cast<double>(n);
  if (lambda_ssim == 0.0) return l1;

  RasterD ssim_grad;
  const double s = ssim(rendered, target, grad ? &ssim_grad : nullptr);
  if (grad) {
    for (std::size_t i = 0; i < n; ++i) grad->v[i] -= lambda_ssim * ssim_grad.v[i];
  }
  return (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s);
}

double loss_semantic(const RasterD& probs, const RasterD& target_onehot,
                     const std::vector<std::uint8_t>& mask, RasterD* grad) {
  check_same_shape(probs, target_onehot, "loss_semantic");
  const int c = probs.c;
  const std::size_t n = static_cast<std::size_t>(probs.h) * probs.w;
  if (!mask.empty() && mask.size() != n) {
    throw std::invalid_argument("loss_semantic: mask size mismatch");
  }
  if (grad) *grad = RasterD(probs.h, probs.w, c);

  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) count += mask.empty() ? 1 : (mask[p] != 0);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);

  CompensatedSum total;
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.empty() && mask[p] == 0) continue;
    for (int k = 0; k < c; ++k) {
      const double t = target_onehot.v[p * c + k];
      if (t == 0.0) continue;
      const double pr = probs.v[p * c + k];
      total.add(-t * std::log(std::max(pr, kProbFloor)));
      // The clamp is active (zero slope) whenever pr sits below the floor.
      if (grad && pr > kProbFloor) grad->v[p * c + k] = -t / pr * inv;
    }
  }
  return total.result() * inv;
}

double loss_flow(const RasterD& flow, const RasterD& target,
                 const std::vector<std::uint8_t>& mask, RasterD* grad) {
  check_same_shape(flow, target, "loss_flow");
  if (flow.c != 2) throw std::invalid_argument("loss_flow: expected 2 channels");
  const std::size_t n = static_cast<std::size_t>(flow.h) * flow.w;
  if (!mask.empty() && mask.size() != n) {
    throw std::invalid_argument("loss_flow: mask size mismatch");
  }
  if (grad) *grad = RasterD(flow.h, flow.w, 2);

  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) count += mask.empty() ? 1 : (mask[p] != 0);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);

  CompensatedSum total;
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.empty() && mask[p] == 0) continue;
    for (int k = 0; k < 2; ++k) {
      const double d = flow.v[p * 2 + k] - target.v[p * 2 + k];
      total.add(std::abs(d));
      if (grad) grad->v[p * 2 + k] = ((d > 0.0) - (d < 0.0)) * inv;
    }
  }
  return total.result() * inv;
}

double loss_depth(const RasterD& depth, const RasterD& target,
                  const std::vector<std::uint8_t>& mask, RasterD* grad) {
  check_same_shape(depth, target, "loss_depth");
  if (depth.c != 1) throw std::invalid_argument("loss_depth: expected 1 channel");
  const std::size_t n = static_cast<std::size_t>(depth.h) * depth.w;
  if (!mask.empty() && mask.size() != n) {
    throw std::invalid_argument("loss_depth: mask size mismatch");
  }
  if (grad) *grad = RasterD(depth.h, depth.w, 1);

  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const bool in = (mask.empty() || mask[p] != 0) && std::isfinite(depth.v[p]);
    count += in;
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);

  CompensatedSum total;
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.empty() && mask[p] == 0) continue;
    if (!std::isfinite(depth.v[p])) continue;
    const double d = depth.v[p] - target.v[p];
    total.add(d * d);
    if (grad) grad->v[p] = 2.0 * d * inv;
  }
  return total.result() * inv;
}

}  // namespace kinesplat
