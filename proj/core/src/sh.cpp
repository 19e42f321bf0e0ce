// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/sh.hpp"

#include <stdexcept>

namespace kinesplat {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

}  // namespace

void sh_basis(int degree, const Eigen::Vector3d& dir, double* out) {
  if (degree < 0 || degree > kMaxShDegree) throw std::invalid_argument("sh degree out of range");
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kC0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2[0] * x * y;
  out[5] = kC2[1] * y * z;
  out[6] = kC2[2] * (2.0 * zz - xx - yy);
  out[7] = kC2[3] * x * z;
  out[8] = kC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3[0] * y * (3.0 * xx - yy);
  out[10] = kC3[1] * x * y * z;
  out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kC3[5] * z * (xx - yy);
  out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_grad(int degree, const Eigen::Vector3d& dir, double* out, Eigen::Vector3d* dout) {
  sh_basis(degree, dir, out);
  const double x = dir.x(), y = dir.y(), z = dir.z();
  dout[0].setZero();
  if (degree < 1) return;
  dout[1] = {0.0, -kC1, 0.0};
  dout[2] = {0.0, 0.0, kC1};
  dout[3] = {-kC1, 0.0, 0.0};
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  dout[4] = kC2[0] * Eigen::Vector3d(y, x, 0.0);
  dout[5] = kC2[1] * Eigen::Vector3d(0.0, z, y);
  dout[6] = kC2[2] * Eigen::Vector3d(-2.0 * x, -2.0 * y, 4.0 * z);
  dout[7] = kC2[3] * Eigen::Vector3d(z, 0.0, x);
  dout[8] = kC2[4] * Eigen::Vector3d(2.0 * x, -2.0 * y, 0.0);
  if (degree < 3) return;
  dout[9] = kC3[0] * Eigen::Vector3d(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
  dout[10] = kC3[1] * Eigen::Vector3d(y * z, x * z, x * y);
  dout[11] = kC3[2] * Eigen::Vector3d(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
  dout[12] = kC3[3] * Eigen::Vector3d(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
  dout[13] = kC3[4] * Eigen::Vector3d(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
  dout[14] = kC3[5] * Eigen::Vector3d(2.0 * x * z, -2.0 * y * z, xx - yy);
  dout[15] = kC3[6] * Eigen::Vector3d(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Eigen::Vector3d evaluate_sh(const Gaussian3D& g, const Eigen::Vector3d& view_dir) {
  const int degree = g.sh_degree();
  double basis[16];
  sh_basis(degree, view_dir, basis);
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  const int n = sh_coeff_count(degree);
  for (int k = 0; k < n; ++k) c += basis[k] * g.sh[static_cast<std::size_t>(k)];
  return c;
}

}  // namespace kinesplat
