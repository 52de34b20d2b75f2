#pragma once

// Rotation helpers. Quaternions are (w, x, y, z) Vec4s; functions taking a
// quaternion normalize it first unless stated otherwise.

#include "gavatar/common.h"

namespace gavatar {

Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

/// Unit quaternion with w >= 0.
Vec4 quat_from_matrix(const Mat3& r);
Mat3 quat_to_matrix(const Vec4& q);
Vec4 quat_multiply(const Vec4& a, const Vec4& b);
Vec4 quat_conjugate(const Vec4& q);
Vec4 quat_normalized(const Vec4& q);
Vec4 quat_from_axis_angle(const Vec3& unit_axis, double angle);

inline Vec4 quat_identity() { return Vec4(1.0, 0.0, 0.0, 0.0); }

/// dL/dq for R = quat_to_matrix(q), including the normalization of q.
Vec4 quat_to_matrix_backward(const Vec4& q, const Mat3& grad_r);

/// c = a ⊗ b. Accumulates dL/da and dL/db.
void quat_multiply_backward(const Vec4& a, const Vec4& b, const Vec4& grad_c, Vec4* grad_a, Vec4* grad_b);

/// y = R(q) v. Accumulates dL/dq (through normalization) and dL/dv.
void rotate_vector_backward(const Vec4& q, const Vec3& v, const Vec3& grad_y, Vec4* grad_q, Vec3* grad_v);

bool is_rotation(const Mat3& r, double tol = 1e-6);

} // namespace gavatar
