#include "gavatar/rotation.h"

#include <cmath>

namespace gavatar {

Mat3 axis_angle_to_matrix(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  Mat3 k;
  k << 0.0, -axis_angle.z(), axis_angle.y(),
       axis_angle.z(), 0.0, -axis_angle.x(),
       -axis_angle.y(), axis_angle.x(), 0.0;
  if (theta < 1e-12) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

Vec4 quat_from_matrix(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  out.normalize();
  if (out[0] < 0.0) {
    out = -out;
  }
  return out;
}

Vec4 quat_normalized(const Vec4& q) {
  const double n = q.norm();
  if (n == 0.0) {
    return quat_identity();
  }
  return q / n;
}

Mat3 quat_to_matrix(const Vec4& q_in) {
  const Vec4 q = quat_normalized(q_in);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Vec4 quat_conjugate(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

Vec4 quat_from_axis_angle(const Vec3& unit_axis, double angle) {
  const double s = std::sin(0.5 * angle);
  return Vec4(std::cos(0.5 * angle), s * unit_axis.x(), s * unit_axis.y(), s * unit_axis.z());
}

Vec4 quat_to_matrix_backward(const Vec4& q_in, const Mat3& g) {
  const double n = q_in.norm();
  const Vec4 q = q_in / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 du;
  du[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  du[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2.0 * x * g(2, 2));
  du[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2.0 * y * g(2, 2));
  du[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return (du - q * q.dot(du)) / n;
}

void quat_multiply_backward(const Vec4& a, const Vec4& b, const Vec4& gc, Vec4* grad_a, Vec4* grad_b) {
  // c = Lmat(a) b = Rmat(b) a
  if (grad_a != nullptr) {
    Eigen::Matrix4d rb;
    rb << b[0], -b[1], -b[2], -b[3],
          b[1], b[0], b[3], -b[2],
          b[2], -b[3], b[0], b[1],
          b[3], b[2], -b[1], b[0];
    *grad_a += rb.transpose() * gc;
  }
  if (grad_b != nullptr) {
    Eigen::Matrix4d la;
    la << a[0], -a[1], -a[2], -a[3],
          a[1], a[0], -a[3], a[2],
          a[2], a[3], a[0], -a[1],
          a[3], -a[2], a[1], a[0];
    *grad_b += la.transpose() * gc;
  }
}

void rotate_vector_backward(const Vec4& q, const Vec3& v, const Vec3& grad_y, Vec4* grad_q, Vec3* grad_v) {
  if (grad_q != nullptr) {
    *grad_q += quat_to_matrix_backward(q, grad_y * v.transpose());
  }
  if (grad_v != nullptr) {
    *grad_v += quat_to_matrix(q).transpose() * grad_y;
  }
}

bool is_rotation(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

} // namespace gavatar
