#pragma once

#include "gavatar/drm.h"
#include "gavatar/losses.h"
#include "gavatar/rasterizer.h"
#include "gavatar/schedule.h"

#include <cstdint>
#include <string>
#include <vector>

namespace gavatar {

/// Bad configuration file, unknown key, or mistyped override.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LearningRates {
  double position_init = 1.6e-4;  // multiplied by the scene extent
  double position_final = 1.6e-6;
  double rotation = 0.001;
  double scale = 0.005;
  double opacity = 0.05;
  double sh_dc = 0.0025;
  double sh_rest = 0.0025 / 20.0;
  double drm = 1e-4;
};

struct RunConfig {
  LossWeights loss;
  double tau = 0.10;
  TrainSchedule schedule;
  LearningRates lr;

  int drm_hidden = 256;
  OutputBounds drm_bounds = OutputBounds::bounded(0.10, 30.0 * 3.14159265358979323846 / 180.0);

  int sh_degree = 3;
  /// Initial human Gaussian scale (m); <= 0 selects the mean mesh edge length.
  double init_scale = 0.0;
  int background_count = 20000;
  /// Background sphere radius (m); <= 0 selects twice the camera rig radius.
  double background_radius = 0.0;
  Vec3 background_color = Vec3::Zero();

  int tile_size = 16;
  double lowpass = 0.3;
  double alpha_cap = 0.99;
  double min_transmittance = 1e-4;

  std::uint64_t seed = 0;
  std::vector<std::string> train_cameras;  // empty = all
  std::vector<std::string> test_cameras;   // empty = all
  int frame_stride = 1;
  /// Frames with t % test_frame_modulo == test_frame_offset are held out; modulo 0 disables.
  int test_frame_modulo = 4;
  int test_frame_offset = 3;
  std::int64_t checkpoint_every = 1000;
  double mask_threshold = 10.0;

  void validate() const;
  RasterSettings raster_settings() const;
};

/// Serialized form (JSON text) with every field present.
std::string config_to_json(const RunConfig& config);
/// Parses JSON; keys absent fall back to defaults, unknown keys throw ConfigError.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);
/// Applies "a.b.c=value" overrides; the key must exist and the value type must match.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& config);

} // namespace gavatar
