// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "kinesplat/scene.hpp"

namespace kinesplat {

inline constexpr int kMaxShDegree = 3;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real spherical harmonics with Condon-Shortley phase, evaluated on a unit
// direction. `out` must hold sh_coeff_count(degree) values.
void sh_basis(int degree, const Eigen::Vector3d& dir, double* out);

// Basis values plus their derivatives with respect to the (free, not
// re-normalized) direction components.
void sh_basis_grad(int degree, const Eigen::Vector3d& dir, double* out, Eigen::Vector3d* dout);

// View-dependent color: sum_k sh[k] * Y_k(view_dir). No clamping.
Eigen::Vector3d evaluate_sh(const Gaussian3D& g, const Eigen::Vector3d& view_dir);

}  // namespace kinesplat
