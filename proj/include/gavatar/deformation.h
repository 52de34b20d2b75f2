#pragma once

// Per-face rigid deformation of Gaussians between canonical and posed space.

#include "gavatar/body_model.h"
#include "gavatar/gaussian_cloud.h"

#include <vector>

namespace gavatar {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  /// (this ∘ other)(p) = this(other(p))
  RigidTransform compose(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  bool is_valid(double tol = 1e-6) const;
};

/// Per-face transforms mapping the canonical mesh onto a posed mesh.
struct FaceTransformSet {
  std::vector<RigidTransform> transforms;
  std::vector<int> degenerate_faces;

  int size() const { return static_cast<int>(transforms.size()); }
  static FaceTransformSet identity(int face_count);
};

/// Per-Gaussian residual rigid motion, applied about the Gaussian's own center:
/// center += translation, orientation = rotation * orientation.
struct ResidualTransform {
  Vec3 translation = Vec3::Zero();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);  // unit quaternion
};

/// Least-squares rigid fit per face from the three vertices plus the point
/// centroid + normal * mean edge length, with reflection correction. The
/// translation maps the canonical centroid onto the posed centroid.
FaceTransformSet compute_pvd(const PosedBody& canonical, const PosedBody& posed);

/// Rigid fit for one face; exposed for testing. Returns false for degenerate input.
bool fit_face_transform(const Vec3 (&canonical)[3], const Vec3& canonical_normal, const Vec3 (&posed)[3],
                        const Vec3& posed_normal, RigidTransform* out);

/// Moves Face-parented Gaussians by their parent's transform; background untouched.
GaussianCloud pose_gaussians(const GaussianCloud& cloud, const FaceTransformSet& transforms);

/// Applies residuals to Face-parented Gaussians; residuals are indexed in human order.
GaussianCloud apply_residuals(const GaussianCloud& cloud, const std::vector<ResidualTransform>& residuals);

/// Inverse of apply_residuals followed by pose_gaussians.
GaussianCloud unpose_gaussians(const GaussianCloud& cloud, const FaceTransformSet& t_set,
                               const std::vector<ResidualTransform>& r_set);

struct DirectionField {
  Points3 directions;
  std::vector<int> flagged;  // rows where the fallback (0,0,1) was used
};

/// Unit vectors from each Gaussian center toward the camera center.
DirectionField relative_sh_directions(const GaussianCloud& cloud, const Vec3& camera_center);

/// Canonical normals rotated by the PVD then residual rotations; rows in human order.
Points3 corrected_sh_directions(const GaussianCloud& cloud, const FaceTransformSet& t_set,
                                const std::vector<ResidualTransform>& r_set);

/// Closest-point distance from p to triangle (a, b, c).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Nearest-face search in canonical space; Background is absorbing. Gaussians
/// farther than tau from every face become Background.
GaussianCloud reassign_parents(const GaussianCloud& cloud, const PosedBody& canonical, double tau);

/// Keeps Face-parented Gaussians, preserving order.
GaussianCloud filter_background(const GaussianCloud& cloud);

} // namespace gavatar
