#pragma once

#include <cstddef>
#include <vector>

namespace plm {

// Dense H x W x 3 image, float64 channels in [0, 1], row-major with
// interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // size = width * height * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

}  // namespace plm
