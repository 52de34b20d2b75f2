#pragma once

#include "gavatar/common.h"

namespace gavatar {

inline constexpr int kMaxShDegree = 3;

/// Real SH basis values for degrees 0..degree at unit direction d.
void sh_basis(int degree, const Vec3& d, double* out);

/// Basis values plus their partial derivatives with respect to d.
void sh_basis_with_grad(int degree, const Vec3& d, double* out, Vec3* grad);

} // namespace gavatar
