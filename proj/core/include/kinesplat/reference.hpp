// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kinesplat/compositor.hpp"

namespace kinesplat {

// All-splats-per-pixel compositor: iterates every splat for every pixel in
// global depth order under the same contribution rules as the tiled path.
// Kept deliberately independent of TileGrid and the tiled traversal code so
// it can serve as an equivalence check of that path.
RenderBuffers render_reference(const std::vector<Splat2D>& splats, int width, int height,
                               int class_count, const CompositeOptions& opt);

}  // namespace kinesplat
