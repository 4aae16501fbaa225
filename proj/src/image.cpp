#include "triplet/image.hpp"

#include <cmath>

namespace triplet {

double srgb_encode(double linear) {
  const double v = linear <= 0.0031308 ? 12.92 * linear
                                       : 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

double srgb_decode(double encoded) {
  return encoded <= 0.04045 ? encoded / 12.92 : std::pow((encoded + 0.055) / 1.055, 2.4);
}

Image downscale(const Image& img, int factor) {
  if (factor <= 1) return img;
  Image out(img.width / factor, img.height / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * inv;
      }
  return out;
}

}  // namespace triplet
