// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "kinesplat/render.hpp"

using namespace kinesplat;

namespace {

// Principal point on a pixel center so an on-axis splat lands exactly on
// pixel (32, 24); fx = fy = 100.
FrameCamera pixel_centered_camera(double timestamp, const Eigen::Vector3d& center) {
  FrameCamera cam;
  cam.K << 100.0, 0.0, 32.5, 0.0, 100.0, 24.5, 0.0, 0.0, 1.0;
  cam.R = Eigen::Matrix3d::Identity();
  cam.t = -center;
  cam.width = 64;
  cam.height = 48;
  cam.timestamp = timestamp;
  return cam;
}

// A tight, effectively opaque splat; with alpha_clamp = 1 its center weight
// is 1 up to ~4e-18, so the flow buffer reads back the raw flow vector.
Gaussian3D probe_splat(const Eigen::Vector3d& mu) {
  Gaussian3D g;
  g.mu = mu;
  g.log_scale = Eigen::Vector3d::Constant(std::log(0.1));
  g.opacity_logit = 40.0;
  g.sh = {Eigen::Vector3d(0.5, 0.5, 0.5)};
  return g;
}

RenderOptions flow_options() {
  RenderOptions opt;
  opt.rgb = true;
  opt.flow = true;
  opt.alpha_clamp = 1.0;
  return opt;
}

}  // namespace

TEST_CASE("identical cameras yield identically zero flow") {
  SceneGraph scene;
  scene.class_count = 0;
  scene.static_gaussians.push_back(probe_splat(Eigen::Vector3d(0.0, 0.0, 10.0)));
  scene.static_gaussians.push_back(probe_splat(Eigen::Vector3d(0.8, -0.4, 7.0)));

  const FrameCamera cam = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  const RenderResult r = render(scene, cam, &cam, flow_options());
  REQUIRE(r.has_flow);
  REQUIRE(r.buffers.flow.v.size() == static_cast<std::size_t>(64 * 48 * 2));
  double max_flow = 0.0;
  for (double f : r.buffers.flow.v) max_flow = std::max(max_flow, std::abs(f));
  CHECK(max_flow <= 1e-12);
}

TEST_CASE("camera translation produces the analytic parallax") {
  SceneGraph scene;
  scene.class_count = 0;
  scene.static_gaussians.push_back(probe_splat(Eigen::Vector3d(0.0, 0.0, 10.0)));

  const FrameCamera cam1 = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  const FrameCamera cam2 = pixel_centered_camera(1.0, Eigen::Vector3d(1.0, 0.0, 0.0));
  const RenderResult r = render(scene, cam1, &cam2, flow_options());

  // A 1 m sideways step at depth 10 with fx = 100 shifts the image by
  // -fx * dx / z = -10 pixels.
  CHECK(std::abs(r.buffers.flow.at(24, 32, 0) - (-10.0)) <= 1e-9);
  CHECK(std::abs(r.buffers.flow.at(24, 32, 1)) <= 1e-9);
  CHECK(r.buffers.accum_alpha.at(24, 32, 0) > 0.5);
}

TEST_CASE("object motion produces the analytic image-space advance") {
  SceneGraph scene;
  scene.class_count = 0;
  DynamicObject obj;
  obj.id = 1;
  obj.canonical.push_back(probe_splat(Eigen::Vector3d::Zero()));
  obj.track.timestamps = {0.0, 1.0};
  obj.track.states = {{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}};
  obj.track.heights = {10.0, 10.0};  // ground plane held at the view depth
  obj.track.velocities = {Eigen::Vector2d(0.5, 0.0)};
  scene.objects.push_back(obj);

  const FrameCamera cam1 = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  const FrameCamera cam2 = pixel_centered_camera(1.0, Eigen::Vector3d::Zero());
  const RenderResult r = render(scene, cam1, &cam2, flow_options());

  // The box advances +0.5 m along camera x at depth 10: +5 pixels.
  CHECK(std::abs(r.buffers.flow.at(24, 32, 0) - 5.0) <= 1e-9);
  CHECK(std::abs(r.buffers.flow.at(24, 32, 1)) <= 1e-9);
  CHECK(r.buffers.accum_alpha.at(24, 32, 0) > 0.5);
}

TEST_CASE("content behind the paired camera is excluded from the flow sum") {
  SceneGraph scene;
  scene.class_count = 0;
  scene.static_gaussians.push_back(probe_splat(Eigen::Vector3d(0.0, 0.0, 10.0)));

  const FrameCamera cam1 = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  // Second camera sits past the splat, which lands behind its near plane.
  const FrameCamera cam2 = pixel_centered_camera(1.0, Eigen::Vector3d(0.0, 0.0, 20.0));
  const RenderResult r = render(scene, cam1, &cam2, flow_options());

  CHECK(r.buffers.flow.at(24, 32, 0) == 0.0);
  CHECK(r.buffers.flow.at(24, 32, 1) == 0.0);
  CHECK(r.buffers.accum_alpha.at(24, 32, 0) > 0.5);  // still visible in cam1
}

TEST_CASE("point flow handles direct and degenerate pairs") {
  const FrameCamera cam1 = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  const FrameCamera cam2 = pixel_centered_camera(1.0, Eigen::Vector3d(1.0, 0.0, 0.0));
  const Eigen::Vector3d p(0.0, 0.0, 10.0);

  const auto same = point_flow(p, p, cam1, cam1);
  REQUIRE(same.has_value());
  CHECK(std::abs((*same)(0)) <= 1e-12);
  CHECK(std::abs((*same)(1)) <= 1e-12);

  const auto shifted = point_flow(p, p, cam1, cam2);
  REQUIRE(shifted.has_value());
  CHECK(std::abs((*shifted)(0) - (-10.0)) <= 1e-9);

  const FrameCamera behind = pixel_centered_camera(1.0, Eigen::Vector3d(0.0, 0.0, 20.0));
  CHECK_FALSE(point_flow(p, p, cam1, behind).has_value());
  CHECK_FALSE(point_flow(Eigen::Vector3d(0.0, 0.0, -1.0), p, cam1, cam1).has_value());
}

TEST_CASE("requesting flow without a paired camera is rejected") {
  SceneGraph scene;
  scene.class_count = 0;
  scene.static_gaussians.push_back(probe_splat(Eigen::Vector3d(0.0, 0.0, 10.0)));
  const FrameCamera cam = pixel_centered_camera(0.0, Eigen::Vector3d::Zero());
  CHECK_THROWS_AS(render(scene, cam, nullptr, flow_options()), std::invalid_argument);
}
