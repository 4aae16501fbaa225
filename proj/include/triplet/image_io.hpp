#pragma once

#include <string>

#include "triplet/image.hpp"

namespace triplet {

// 8-bit sRGB PNG in/out; linear light inside the engine. RGBA inputs are
// composited over `background` using the file's alpha.
Image load_png(const std::string& path, const Rgb& background = Rgb{1, 1, 1});
void save_png(const Image& img, const std::string& path);

}  // namespace triplet
