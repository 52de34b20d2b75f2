#include "gavatar/pipeline.h"

#include <chrono>

namespace gavatar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point& mark) {
  const auto now = Clock::now();
  const double s = std::chrono::duration<double>(now - mark).count();
  mark = now;
  return s;
}

} // namespace

DeformedCloud deform_cloud(const GaussianCloud& cloud, const DrmNetwork& drm, const BodyModel& body,
                           const ShapeParams& shape, const PosedBody& canonical, const PoseParams& pose,
                           const Vec3& camera_center, DeformTimes* times) {
  auto mark = Clock::now();
  DeformTimes local;
  const PosedBody posed = pose_body(body, shape, pose);
  const FaceTransformSet t_set = compute_pvd(canonical, posed);
  local.pvd = seconds_since(mark);

  GaussianCloud rigid = pose_gaussians(cloud, t_set);
  local.posing1 = seconds_since(mark);

  const std::vector<int> human = rigid.human_indices();
  Points3 human_centers(static_cast<Eigen::Index>(human.size()), 3);
  for (std::size_t h = 0; h < human.size(); ++h) human_centers.row(h) = rigid.centers.row(human[h]);
  std::vector<ResidualTransform> residuals;
  if (!human.empty()) {
    const DrmForward fwd = drm_forward(drm, encode_joint_distances(human_centers, posed.joints));
    residuals = postprocess_output(fwd.raw, drm.bounds());
  }
  local.drm = seconds_since(mark);

  DeformedCloud out;
  out.world = apply_residuals(rigid, residuals);
  out.directions = relative_sh_directions(out.world, camera_center).directions;
  const Points3 corrected = corrected_sh_directions(cloud, t_set, residuals);
  for (std::size_t h = 0; h < human.size(); ++h) out.directions.row(human[h]) = corrected.row(h);
  local.posing2 = seconds_since(mark);
  if (times) *times = local;
  return out;
}

} // namespace gavatar
