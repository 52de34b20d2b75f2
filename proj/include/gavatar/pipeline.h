#pragma once

#include "gavatar/body_model.h"
#include "gavatar/deformation.h"
#include "gavatar/drm.h"
#include "gavatar/gaussian_cloud.h"

namespace gavatar {

/// Seconds spent in each deformation stage.
struct DeformTimes {
  double pvd = 0.0;      // pose_body + per-face fits
  double posing1 = 0.0;  // rigid posing of Gaussians
  double drm = 0.0;      // encoding, network, post-processing
  double posing2 = 0.0;  // residuals and SH directions
};

struct DeformedCloud {
  GaussianCloud world;
  Points3 directions;  // one row per Gaussian, cloud order
};

/// Canonical cloud -> posed cloud with residuals and per-Gaussian SH directions
/// (normal-based for human Gaussians, camera-relative for background ones).
DeformedCloud deform_cloud(const GaussianCloud& canonical_cloud, const DrmNetwork& drm, const BodyModel& body,
                           const ShapeParams& shape, const PosedBody& canonical, const PoseParams& pose,
                           const Vec3& camera_center, DeformTimes* times = nullptr);

} // namespace gavatar
