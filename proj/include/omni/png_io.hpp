// Minimal PNG io for frame directories: 8-bit RGB, non-interlaced, one IDAT
// chunk compressed with zlib. The reader accepts exactly what the writer
// emits, which is all the toolchain ever produces.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omni/codec.hpp"

namespace omni {

struct RgbImage {
    int H = 0, W = 0;
    std::vector<uint8_t> rgb;  // [H x W x 3] row-major

    uint8_t at(int y, int x, int c) const { return rgb[(size_t(y) * W + x) * 3 + c]; }
};

void write_png(const std::string& path, const RgbImage& img);
RgbImage read_png(const std::string& path);

// Frame t of a [0,1] pixel video, rounded to the 8-bit grid.
RgbImage frame_to_rgb(const PixelVideo& v, int t);

}  // namespace omni
