#pragma once

// Images, image pyramids and posed multi-view datasets.

#include "erf/camera.hpp"

#include <string>
#include <vector>

namespace xrf {

/// Linear RGB float image, row-major, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // (y * width + x) * 3 + c

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  Rgb pixel(int x, int y) const {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return Rgb(data[i], data[i + 1], data[i + 2]);
  }
  void set_pixel(int x, int y, const Rgb& v) {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    for (int c = 0; c < 3; ++c) data[i + c] = static_cast<float>(v[c]);
  }
};

enum class PyramidFilter { Box, Gaussian };

/// Level 0 is the input; level k has ceil(dims(k - 1) / 2) until 1 x 1.
/// Box: 2x2 average (edge pixels replicated for odd sizes). Gaussian: 5-tap
/// binomial blur followed by decimation.
std::vector<Image> build_pyramid(const Image& image, PyramidFilter filter = PyramidFilter::Box);

enum class Split { Train, Test };

struct Dataset {
  std::vector<Camera> cameras;
  std::vector<std::vector<Image>> pyramids;
  std::vector<Split> split;
  std::vector<std::string> names;
  Aabb aabb;  // scene bounds supplied with the data
  bool has_aabb = false;

  size_t size() const { return cameras.size(); }
  std::vector<int> indices(Split s) const;
};

}  // namespace xrf
