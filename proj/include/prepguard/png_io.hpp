#pragma once

#include <string>

#include "prepguard/tensor.hpp"

namespace prepguard {

// 8-bit grayscale (1 channel) or RGB (3 channels), non-interlaced.
void write_png(const std::string& path, const ImageTensor& img);

// Any PNG; palette/16-bit/alpha inputs are folded down to gray or RGB.
ImageTensor read_png(const std::string& path);

}  // namespace prepguard
