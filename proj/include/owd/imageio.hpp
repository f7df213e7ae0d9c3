#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owd/geometry.hpp"

namespace owd {

/// 8-bit interleaved RGB image (HWC).
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // size height*width*3

    std::uint8_t& at(int r, int c, int ch) {
        return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    std::uint8_t at(int r, int c, int ch) const {
        return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
};

// Binary PPM (P6) / PGM (P5). Lossless for 8-bit data.
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

void write_mask_pgm(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_pgm(const std::string& path);

}  // namespace owd
