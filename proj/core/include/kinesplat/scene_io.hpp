// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "kinesplat/scene.hpp"

namespace kinesplat {

// Scene, track, and camera documents are JSON. Field names and layouts are
// documented in the README and covered by round-trip tests; all scalars are
// written as 64-bit decimal text.
SceneGraph load_scene(const std::string& path);
void save_scene(const std::string& path, const SceneGraph& scene);

UnicycleTrack load_track(const std::string& path);
void save_track(const std::string& path, const UnicycleTrack& track);

std::vector<FrameCamera> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<FrameCamera>& cams);

}  // namespace kinesplat
