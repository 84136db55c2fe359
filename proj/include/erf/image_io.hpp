#pragma once

// PNG input/output and float array dumps.

#include "erf/dataset.hpp"

#include <string>

namespace xrf {

/// Reads an 8- or 16-bit PNG as linear [0, 1] RGB. Alpha, when present, is
/// composited over `background`.
Image read_png(const std::string& path, const Rgb& background = Rgb::Ones());

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::string& path, const Image& image);

/// Writes channel `channel` of the image as a little-endian float32 .npy
/// array of shape (height, width).
void write_npy(const std::string& path, const Image& image, int channel = 0);

}  // namespace xrf
