#pragma once

#include <cstdint>
#include <vector>

#include "triplet/vec.hpp"

namespace triplet {

// Linear-light RGB raster, double precision, row-major.
struct Image {
  int width = 0, height = 0;
  std::vector<double> data;  // 3 channels interleaved

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}
  Image(int w, int h, const Rgb& fill) : Image(w, h) {
    for (int i = 0; i < w * h; ++i) set_pixel(i % w, i / w, fill);
  }

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  Rgb pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_pixel(int x, int y, const Rgb& v) {
    at(x, y, 0) = v.r;
    at(x, y, 1) = v.g;
    at(x, y, 2) = v.b;
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

double srgb_encode(double linear);
double srgb_decode(double encoded);

// Box-filter downscale by an integer factor (resolution schedule).
Image downscale(const Image& img, int factor);

}  // namespace triplet
