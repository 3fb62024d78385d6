#pragma once

#include <string>

#include "strip/tensor.hpp"

namespace strip {

// Portable graymap/pixmap, 8-bit, binary or ASCII (P2/P3/P5/P6).
Image read_pnm(const std::string& path);

// P5 for single-channel images, P6 for three channels.
void write_pnm(const Image& img, const std::string& path);

}  // namespace strip
