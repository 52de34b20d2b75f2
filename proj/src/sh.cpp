#include "gavatar/sh.h"

#include <stdexcept>

namespace gavatar {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

} // namespace

void sh_basis(int degree, const Vec3& d, double* out) {
  sh_basis_with_grad(degree, d, out, nullptr);
}

void sh_basis_with_grad(int degree, const Vec3& d, double* y, Vec3* g) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw std::invalid_argument("SH degree must be in [0, 3]");
  }
  const double x = d.x(), yy = d.y(), z = d.z();
  y[0] = kC0;
  if (g) g[0].setZero();
  if (degree < 1) return;
  y[1] = -kC1 * yy;
  y[2] = kC1 * z;
  y[3] = -kC1 * x;
  if (g) {
    g[1] = Vec3(0.0, -kC1, 0.0);
    g[2] = Vec3(0.0, 0.0, kC1);
    g[3] = Vec3(-kC1, 0.0, 0.0);
  }
  if (degree < 2) return;
  const double xx = x * x, y2 = yy * yy, zz = z * z;
  y[4] = kC2[0] * x * yy;
  y[5] = kC2[1] * yy * z;
  y[6] = kC2[2] * (2.0 * zz - xx - y2);
  y[7] = kC2[3] * x * z;
  y[8] = kC2[4] * (xx - y2);
  if (g) {
    g[4] = kC2[0] * Vec3(yy, x, 0.0);
    g[5] = kC2[1] * Vec3(0.0, z, yy);
    g[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * yy, 4.0 * z);
    g[7] = kC2[3] * Vec3(z, 0.0, x);
    g[8] = kC2[4] * Vec3(2.0 * x, -2.0 * yy, 0.0);
  }
  if (degree < 3) return;
  y[9] = kC3[0] * yy * (3.0 * xx - y2);
  y[10] = kC3[1] * x * yy * z;
  y[11] = kC3[2] * yy * (4.0 * zz - xx - y2);
  y[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
  y[13] = kC3[4] * x * (4.0 * zz - xx - y2);
  y[14] = kC3[5] * z * (xx - y2);
  y[15] = kC3[6] * x * (xx - 3.0 * y2);
  if (g) {
    g[9] = kC3[0] * Vec3(6.0 * x * yy, 3.0 * xx - 3.0 * y2, 0.0);
    g[10] = kC3[1] * Vec3(yy * z, x * z, x * yy);
    g[11] = kC3[2] * Vec3(-2.0 * x * yy, 4.0 * zz - xx - 3.0 * y2, 8.0 * yy * z);
    g[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * yy * z, 6.0 * zz - 3.0 * xx - 3.0 * y2);
    g[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - y2, -2.0 * x * yy, 8.0 * x * z);
    g[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * yy * z, xx - y2);
    g[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * y2, -6.0 * x * yy, 0.0);
  }
}

} // namespace gavatar
