#pragma once

// Image quality metrics over [0, 1] RGB images.

#include "erf/dataset.hpp"

namespace xrf {

inline constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);
/// 10 log10(1 / MSE), capped at kPsnrCap (identical images).
double psnr(const Image& a, const Image& b);
/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over the valid region,
/// C1 = 0.01^2, C2 = 0.03^2, averaged over the three channels. Images smaller
/// than the window use a window cropped to the image.
double ssim(const Image& a, const Image& b);

}  // namespace xrf
