// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/render.hpp"

#include <stdexcept>

#include "kinesplat/parallel.hpp"

namespace kinesplat {

RenderResult render(const SceneGraph& scene, const FrameCamera& cam, const FrameCamera* cam2,
                    const RenderOptions& opt) {
  if (opt.flow && cam2 == nullptr) {
    throw std::invalid_argument("render: flow requested without a second camera");
  }

  RenderResult out;
  out.t1 = cam.timestamp;
  out.has_flow = opt.flow;
  if (cam2) out.t2 = cam2->timestamp;

  const WorldView world = instantiate_world(scene, cam.timestamp, opt.interp, opt.horizon);
  std::vector<TrackPose> poses2;
  if (opt.flow) {
    poses2.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) {
      poses2.push_back(pose_at(obj.track, cam2->timestamp, opt.interp, opt.horizon));
    }
  }

  const std::size_t n = world.gaussians.size();
  std::vector<std::optional<Splat2D>> projected(n);
  std::vector<SplatGeom> geoms(n);
  parallel_for(static_cast<std::int64_t>(n), opt.threads, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      projected[ui] = project_gaussian(world.gaussians[ui], cam, opt.proj, &geoms[ui]);
      if (!projected[ui]) continue;
      Splat2D& s = *projected[ui];
      s.source = world.sources[ui];
      if (opt.flow) {
        // World position at t2: statics stay put, dynamics ride their track.
        Eigen::Vector3d mu2 = world.gaussians[ui].mu;
        if (s.source.object >= 0) {
          const auto& obj = scene.objects[static_cast<std::size_t>(s.source.object)];
          mu2 = poses2[static_cast<std::size_t>(s.source.object)].apply(
              obj.canonical[static_cast<std::size_t>(s.source.index)].mu);
        }
        const Eigen::Vector3d p2 = cam2->R * mu2 + cam2->t;
        if (p2.z() > opt.proj.near_plane) {
          Eigen::Matrix<double, 2, 3> J2;
          s.flow = project_point(cam2->K, p2, &J2) - s.mean2d;
          s.flow_valid = true;
          geoms[ui].p_cam2 = p2;
          geoms[ui].J2 = J2;
        }
      }
    }
  });

  out.splats.reserve(n);
  if (opt.training) out.geoms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!projected[i]) continue;
    out.splats.push_back(std::move(*projected[i]));
    if (opt.training) out.geoms.push_back(geoms[i]);
  }

  out.grid = bin_tiles(out.splats, cam.width, cam.height, opt.tile_size, opt.q_cut());

  CompositeOptions copt;
  copt.rgb = opt.rgb;
  copt.semantic = opt.semantic;
  copt.depth = opt.depth;
  copt.flow = opt.flow;
  copt.background = scene.background_color;
  copt.alpha_clamp = opt.alpha_clamp;
  copt.alpha_cut = opt.alpha_cut;
  copt.q_cut = opt.q_cut();
  copt.t_stop = opt.t_stop;
  copt.threads = opt.threads;
  out.buffers = composite(out.splats, out.grid, scene.class_count, copt);

  if (opt.exposure && opt.rgb) {
    out.buffers.color_exposed = apply_exposure(out.buffers.color, cam.exposure_A, cam.exposure_b);
  }
  return out;
}

}  // namespace kinesplat
