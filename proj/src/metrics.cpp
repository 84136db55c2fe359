#include "erf/metrics.hpp"

#include <cmath>

namespace xrf {

namespace {

void check_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size() || a.data.empty())
    throw InvalidArgument("image metrics: images must be non-empty and of equal size");
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same_size(a, b);
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
  check_same_size(a, b);
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int wx = std::min(11, a.width);
  const int wy = std::min(11, a.height);
  auto taps = [](int n) {
    std::vector<double> g(static_cast<size_t>(n));
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = i - 0.5 * (n - 1);
      g[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
      s += g[static_cast<size_t>(i)];
    }
    for (double& v : g) v /= s;
    return g;
  };
  const std::vector<double> gx = taps(wx), gy = taps(wy);
  const int ox = a.width - wx + 1, oy = a.height - wy + 1;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int y0 = 0; y0 < oy; ++y0)
      for (int x0 = 0; x0 < ox; ++x0) {
        double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int j = 0; j < wy; ++j)
          for (int i = 0; i < wx; ++i) {
            const double w = gx[static_cast<size_t>(i)] * gy[static_cast<size_t>(j)];
            const double va = a.at(x0 + i, y0 + j, c), vb = b.at(x0 + i, y0 + j, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        sum += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
      }
    total += sum / (static_cast<double>(ox) * oy);
  }
  return total / 3.0;
}

}  // namespace xrf
