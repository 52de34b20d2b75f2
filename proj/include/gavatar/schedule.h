#pragma once

#include <cstdint>
#include <string>

namespace gavatar {

enum class TrainPhase { Warmup, GaussiansOnly, DrmOnly };

std::string to_string(TrainPhase phase);

struct TrainSchedule {
  std::int64_t warmup_iters = 10000;
  std::int64_t alternation_block = 5000;
  std::int64_t total_iters = 100000;
  std::int64_t densify_from = 500;
  std::int64_t densify_until = 50000;
  std::int64_t densify_interval = 100;
  std::int64_t parent_update_every = 1000;
  /// Threshold on the view-averaged |dL/d mean2D| in normalized device units.
  double densify_grad_threshold = 0.0002;
  double prune_opacity = 0.005;
  /// Prune Gaussians whose largest world scale exceeds this fraction of the scene extent.
  double prune_scale_fraction = 0.1;
  /// Clone below / split above this fraction of the scene extent.
  double split_scale_fraction = 0.01;

  void validate() const;
};

/// Phase of zero-based iteration `iter`.
TrainPhase schedule_phase(std::int64_t iter, const TrainSchedule& schedule);

inline bool gaussians_trainable(TrainPhase p) { return p != TrainPhase::DrmOnly; }
inline bool drm_trainable(TrainPhase p) { return p != TrainPhase::GaussiansOnly; }

/// True when densification runs after `completed` steps.
bool is_densify_step(std::int64_t completed, TrainPhase phase_of_last_step, const TrainSchedule& schedule);
/// True when parents are reassigned after `completed` steps.
bool is_parent_update_step(std::int64_t completed, const TrainSchedule& schedule);

} // namespace gavatar
