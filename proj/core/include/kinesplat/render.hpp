// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kinesplat/compositor.hpp"
#include "kinesplat/projection.hpp"
#include "kinesplat/scene.hpp"

namespace kinesplat {

struct RenderOptions {
  bool rgb = true;
  bool semantic = false;
  bool depth = false;
  bool flow = false;
  bool exposure = false;  // also fill color_exposed
  bool training = false;  // retain the projection tape for the backward pass
  int tile_size = 16;
  int threads = 1;
  ProjectionConfig proj;
  double alpha_clamp = 0.999;
  double alpha_cut = 1.0 / 255.0;
  double t_stop = 1e-4;
  PoseInterp interp = PoseInterp::kUnicycle;
  double horizon = kDefaultPoseHorizon;

  double q_cut() const { return proj.sigma_cut * proj.sigma_cut; }
};

struct RenderResult {
  RenderBuffers buffers;
  // Tape: surviving splats in world order, their projection intermediates
  // (training mode only), and the tile assignment used for compositing.
  std::vector<Splat2D> splats;
  std::vector<SplatGeom> geoms;
  TileGrid grid;
  double t1 = 0.0;
  double t2 = 0.0;
  bool has_flow = false;
};

// Renders the scene at cam.timestamp. cam2 supplies the flow pairing and is
// required when options.flow is set.
RenderResult render(const SceneGraph& scene, const FrameCamera& cam, const FrameCamera* cam2,
                    const RenderOptions& opt);

inline RenderResult render(const SceneGraph& scene, const FrameCamera& cam,
                           const RenderOptions& opt) {
  return render(scene, cam, nullptr, opt);
}

}  // namespace kinesplat
