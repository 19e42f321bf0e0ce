// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace kinesplat {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'A', 'S'};

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

unsigned char to_byte(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

}  // namespace

void write_ppm(const std::string& path, const RasterD& img) {
  if (img.c != 3 && img.c != 1) throw std::invalid_argument("write_ppm: need 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int k = 0; k < 3; ++k) {
        row[static_cast<std::size_t>(x) * 3 + k] = to_byte(img.at(y, x, img.c == 3 ? k : 0));
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

void write_fras(const std::string& path, const RasterD& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_fras: cannot open " + path);
  f.write(kMagic, 4);
  put_u32(f, static_cast<std::uint32_t>(img.h));
  put_u32(f, static_cast<std::uint32_t>(img.w));
  put_u32(f, static_cast<std::uint32_t>(img.c));
  std::vector<float> data(img.v.size());
  for (std::size_t i = 0; i < img.v.size(); ++i) data[i] = static_cast<float>(img.v[i]);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write_fras: write failed for " + path);
}

RasterD read_fras(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_fras: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("read_fras: bad magic in " + path);
  }
  const std::uint32_t h = get_u32(f), w = get_u32(f), c = get_u32(f);
  RasterD img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  std::vector<float> data(img.v.size());
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("read_fras: truncated file " + path);
  for (std::size_t i = 0; i < data.size(); ++i) img.v[i] = static_cast<double>(data[i]);
  return img;
}

}  // namespace kinesplat
