// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "kinesplat/compositor.hpp"

namespace kinesplat {

// 8-bit binary PPM (P6). Values are clamped to [0,1] here and nowhere else.
// Accepts 3-channel rasters; 1-channel rasters are expanded to gray.
void write_ppm(const std::string& path, const RasterD& img);

// Flat float32 raster: 16-byte header (magic "FRAS", then uint32 height,
// width, channels, little-endian) followed by height*width*channels float32
// values, row-major, channel-interleaved. Extension: .fras
void write_fras(const std::string& path, const RasterD& img);
RasterD read_fras(const std::string& path);

}  // namespace kinesplat
