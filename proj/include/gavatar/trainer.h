#pragma once

#include "gavatar/adam.h"
#include "gavatar/body_model.h"
#include "gavatar/config.h"
#include "gavatar/dataset.h"
#include "gavatar/drm.h"
#include "gavatar/gaussian_cloud.h"
#include "gavatar/image.h"
#include "gavatar/losses.h"
#include "gavatar/rasterizer.h"
#include "gavatar/schedule.h"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace gavatar {

/// Non-finite loss or gradients during a step.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accumulated screen-space gradient norms since the last density event.
struct GradStats {
  Eigen::VectorXd accum;
  Eigen::VectorXd count;

  void reset(int n);
  void gather(std::span<const int> sources);
  /// Mean gradient per Gaussian; 0 where never visible.
  Eigen::VectorXd average() const;
};

struct DensifyResult {
  GaussianCloud cloud;
  /// For every output row, the input row it continues (optimizer state kept) or -1 for new rows.
  std::vector<int> sources;
  int cloned = 0;
  int split = 0;
  int pruned = 0;
};

/// Clone small and split large high-gradient Gaussians (children inherit the parent id),
/// then prune by opacity and world scale. With densify false only pruning runs.
DensifyResult densify_and_prune(const GaussianCloud& cloud, const GradStats& stats, const TrainSchedule& schedule,
                                double scene_extent, bool densify, std::mt19937_64& rng);

/// Delegates to reassign_parents when `completed` is a parent-update step; otherwise returns the cloud unchanged.
GaussianCloud maybe_reassign_parents(const GaussianCloud& cloud, const PosedBody& canonical, std::int64_t completed,
                                     const TrainSchedule& schedule, double tau);

struct GaussianOptimizer {
  AdamState centers, rotations, log_scales, opacity, sh;

  void reset(int n, int sh_count);
  void gather(std::span<const int> sources);
};

struct DrmOptimizer {
  std::array<AdamState, DrmNetwork::kLayerCount> weight, bias;

  void reset(const DrmNetwork& net);
};

struct TrainingView {
  std::string camera_id;
  int frame = 0;
  Camera camera;
  Image image;
  PoseParams pose;
};

struct StepReport {
  std::int64_t iteration = 0;  // zero-based index of the step just taken
  TrainPhase phase = TrainPhase::Warmup;
  double loss = 0.0, l1 = 0.0, ssim = 0.0, perceptual = 0.0;
  int gaussians = 0;
  int human = 0;
  std::string camera_id;
  int frame = 0;
  int cloned = 0, split = 0, pruned = 0;
  bool reassigned = false;
};

struct TrainerState {
  RunConfig config;
  BodyModel body;
  ShapeParams shape;
  PosedBody canonical;
  GaussianCloud cloud;
  DrmNetwork drm;
  GaussianOptimizer gaussian_opt;
  DrmOptimizer drm_opt;
  GradStats stats;
  std::int64_t iteration = 0;  // completed steps
  double scene_extent = 1.0;
  Vec3 background_center = Vec3::Zero();
  double background_radius = 1.0;
  std::mt19937_64 rng;
  PerceptualHook perceptual;  // not checkpointed
};

/// Center and radius of the camera rig (mean camera center, mean distance to it).
std::pair<Vec3, double> rig_geometry(const std::vector<NamedCamera>& cameras);

TrainerState init_trainer(const RunConfig& config, const BodyModel& body, const ShapeParams& shape,
                          const std::vector<NamedCamera>& cameras);

/// Loss and gradients with respect to the canonical parameters and the DRM weights.
struct StepGradients {
  TotalLoss loss;
  Points3 centers;
  Quats rotations;
  Points3 log_scales;
  Eigen::VectorXd opacity_logits;
  RowMatrix sh;
  /// |dL/d mean2D| in pixels and the visibility of each Gaussian in this view.
  Eigen::VectorXd mean2d_norm;
  std::vector<char> visible;
  /// Layer gradients are filled (has_drm) only when the DRM is trainable this step.
  DrmGradients drm;
  bool has_drm = false;
  RenderOutput render;
};

/// Forward and backward pass for one view without touching the state.
StepGradients compute_step_gradients(const TrainerState& state, const TrainingView& view);

/// One forward/backward/update pass, then density control and parent updates when due.
StepReport train_step(TrainerState& state, const TrainingView& view);

double position_learning_rate(const TrainerState& state);

inline constexpr char kCheckpointMagic[] = "GAVCKPT1";
inline constexpr std::int64_t kCheckpointVersion = 1;

void save_checkpoint(const TrainerState& state, const std::string& path);
/// When `expected` is given its hash must match the stored one unless allow_config_mismatch.
TrainerState load_checkpoint(const std::string& path, const RunConfig* expected = nullptr,
                             bool allow_config_mismatch = false);

/// Canonical cloud + DRM rendered for a pose; background Gaussians dropped unless keep_background.
RenderOutput render_avatar(const TrainerState& state, const PoseParams& pose, const Camera& camera,
                           bool keep_background);

} // namespace gavatar
