#pragma once

#include "gavatar/common.h"
#include "gavatar/deformation.h"
#include "gavatar/gaussian_cloud.h"
#include "gavatar/image.h"

#include <vector>

namespace gavatar {

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  double near = 0.01;
  double far = 100.0;
  RigidTransform world_to_camera;

  /// Camera center in world coordinates.
  Vec3 center() const { return world_to_camera.inverse().translation; }
  void validate() const;
};

/// Camera at `eye` looking at `target`; `up` is the world up direction.
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double fx,
                      double fy);

struct RasterSettings {
  int tile_size = 16;
  double lowpass = 0.3;
  double alpha_cap = 0.99;
  double min_alpha = 1.0 / 255.0;
  double min_transmittance = 1e-4;
  /// Means projecting further than this fraction of the image size outside it are culled.
  double guard_band = 1.0;
  double depth_epsilon = 1e-10;
  Vec3 background = Vec3::Zero();
};

enum class CullReason { None, Depth, GuardBand, Transparent };

struct ProjectedGaussians {
  int count = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> means;
  /// Σ2D entries (a, b, c) = [[a, b], [b, c]] after the low-pass term.
  Points3 covariances;
  /// Inverse of Σ2D as (a, b, c).
  Points3 conics;
  Eigen::VectorXd depths;
  Eigen::VectorXd opacities;
  Points3 colors;
  /// Unclamped SH color, kept to gate gradients at the clamp.
  Points3 raw_colors;
  /// Conservative pixel radius beyond which alpha < min_alpha.
  Eigen::VectorXd radii;
  std::vector<CullReason> cull;

  bool visible(int i) const { return cull[i] == CullReason::None; }
  std::vector<int> culled() const;
};

ProjectedGaussians project_gaussians(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                                     const RasterSettings& settings = {});

/// Per-pixel compositing state needed for the backward pass.
struct RasterCache {
  int width = 0;
  int height = 0;
  int tile_size = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  /// CSR lists of Gaussian indices per tile, front to back.
  std::vector<int> tile_offsets;
  std::vector<int> tile_items;
  std::vector<double> final_transmittance;
  /// Number of tile-list entries consumed by each pixel.
  std::vector<int> consumed;
};

struct RenderOutput {
  Image rgb;
  Image alpha;
  Image depth;
  RasterCache cache;
};

RenderOutput rasterize_forward(const ProjectedGaussians& projected, int width, int height,
                               const RasterSettings& settings = {});

/// Gradients with respect to every Gaussian attribute and the supplied directions.
struct CloudGradients {
  Points3 centers;
  Quats rotations;
  Points3 log_scales;
  Eigen::VectorXd opacity_logits;
  RowMatrix sh;
  Points3 directions;
  /// |dL/d mean2D| per Gaussian, used for densification statistics.
  Eigen::VectorXd mean2d_norm;

  void resize(int n, int sh_count);
  void set_zero();
};

CloudGradients rasterize_backward(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                                  const RasterSettings& settings, const ProjectedGaussians& projected,
                                  const RenderOutput& output, const Image& grad_rgb);

/// Convenience: project then rasterize.
RenderOutput render(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                    const RasterSettings& settings = {}, ProjectedGaussians* projected_out = nullptr);

/// 1 where alpha > 0.5 and depth < threshold, else 0.
Image render_mask(const Image& depth, const Image& alpha, double threshold);

} // namespace gavatar
