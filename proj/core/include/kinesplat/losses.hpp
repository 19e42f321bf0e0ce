// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "kinesplat/compositor.hpp"

namespace kinesplat {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_s = 0.01;
  double lambda_f = 0.01;
  double lambda_t = 0.1;
  double lambda_uni = 0.1;
  double lambda_reg = 0.1;
};

// Structural similarity with an 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, peak 1.0, averaged over channels. grad_a receives the derivative
// of the returned mean with respect to `a`.
double ssim(const RasterD& a, const RasterD& b, RasterD* grad_a = nullptr);

// (1 - lambda_ssim) * mean|r - t| + lambda_ssim * (1 - SSIM(r, t)).
double loss_image(const RasterD& rendered, const RasterD& target, double lambda_ssim,
                  RasterD* grad = nullptr);

// Cross entropy against one-hot targets, averaged over masked pixels; rendered
// probabilities are clamped at 1e-8 before the log. Empty mask = all pixels.
double loss_semantic(const RasterD& probs, const RasterD& target_onehot,
                     const std::vector<std::uint8_t>& mask, RasterD* grad = nullptr);

// Mean over masked pixels of |du| + |dv|.
double loss_flow(const RasterD& flow, const RasterD& target,
                 const std::vector<std::uint8_t>& mask, RasterD* grad = nullptr);

// Mean over masked pixels of squared depth difference (auxiliary supervision;
// pixels whose rendered depth is non-finite are skipped).
double loss_depth(const RasterD& depth, const RasterD& target,
                  const std::vector<std::uint8_t>& mask, RasterD* grad = nullptr);

}  // namespace kinesplat
