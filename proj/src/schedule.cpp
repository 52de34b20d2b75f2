#include "gavatar/schedule.h"

#include "gavatar/common.h"

namespace gavatar {

std::string to_string(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::Warmup: return "warmup";
    case TrainPhase::GaussiansOnly: return "gaussians";
    case TrainPhase::DrmOnly: return "drm";
  }
  return "unknown";
}

void TrainSchedule::validate() const {
  if (total_iters <= 0 || warmup_iters < 0 || alternation_block <= 0 || densify_interval <= 0 ||
      parent_update_every <= 0 || densify_from < 0 || densify_until < 0) {
    throw ValidationError("schedule: iteration counts must be positive");
  }
  if (warmup_iters > total_iters) throw ValidationError("schedule: warmup_iters exceeds total_iters");
  if (densify_until > total_iters) throw ValidationError("schedule: densify_until exceeds total_iters");
  if (!(densify_grad_threshold >= 0.0) || !(prune_opacity >= 0.0 && prune_opacity < 1.0) ||
      !(prune_scale_fraction > 0.0) || !(split_scale_fraction > 0.0)) {
    throw ValidationError("schedule: density-control thresholds out of range");
  }
}

TrainPhase schedule_phase(std::int64_t iter, const TrainSchedule& s) {
  if (iter < s.warmup_iters) return TrainPhase::Warmup;
  const std::int64_t block = (iter - s.warmup_iters) / s.alternation_block;
  return block % 2 == 0 ? TrainPhase::GaussiansOnly : TrainPhase::DrmOnly;
}

bool is_densify_step(std::int64_t completed, TrainPhase phase, const TrainSchedule& s) {
  return gaussians_trainable(phase) && completed > s.densify_from && completed <= s.densify_until &&
         completed % s.densify_interval == 0;
}

bool is_parent_update_step(std::int64_t completed, const TrainSchedule& s) {
  return completed > 0 && completed % s.parent_update_every == 0;
}

} // namespace gavatar
