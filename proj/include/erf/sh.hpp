#pragma once

// Real spherical harmonics in Cartesian form, bands 0..3, without the
// Condon-Shortley phase. Basis index k = l * l + l + m.

#include "erf/common.hpp"

namespace xrf {

inline constexpr int kMaxShBands = 4;

/// Writes the bands^2 basis values at unit direction d into out.
void sh_basis(int bands, const Vec3& d, double* out);

}  // namespace xrf
