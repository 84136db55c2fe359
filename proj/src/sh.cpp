#include "erf/sh.hpp"

namespace xrf {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2a = 1.0925484305920792;
constexpr double kC2b = 0.31539156525252005;
constexpr double kC2c = 0.5462742152960396;
constexpr double kC3a = 0.5900435899266435;
constexpr double kC3b = 2.890611442640554;
constexpr double kC3c = 0.4570457994644658;
constexpr double kC3d = 0.3731763325901154;
constexpr double kC3e = 1.445305721320277;

}  // namespace

void sh_basis(int bands, const Vec3& d, double* out) {
  if (bands < 1 || bands > kMaxShBands) throw InvalidArgument("sh_basis: bands must be in [1, 4]");
  const double x = d.x(), y = d.y(), z = d.z();
  out[0] = kC0;
  if (bands < 2) return;
  out[1] = kC1 * y;
  out[2] = kC1 * z;
  out[3] = kC1 * x;
  if (bands < 3) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2a * x * y;
  out[5] = kC2a * y * z;
  out[6] = kC2b * (3.0 * zz - 1.0);
  out[7] = kC2a * x * z;
  out[8] = kC2c * (xx - yy);
  if (bands < 4) return;
  out[9] = kC3a * y * (3.0 * xx - yy);
  out[10] = kC3b * x * y * z;
  out[11] = kC3c * y * (5.0 * zz - 1.0);
  out[12] = kC3d * z * (5.0 * zz - 3.0);
  out[13] = kC3c * x * (5.0 * zz - 1.0);
  out[14] = kC3e * z * (xx - yy);
  out[15] = kC3a * x * (xx - 3.0 * yy);
}

}  // namespace xrf
