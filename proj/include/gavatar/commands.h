#pragma once

#include "gavatar/config.h"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gavatar {

/// Invalid command-line usage; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  std::string out_dir;
  int joints = 8;
  int segments = 12;
  int cameras = 4;
  int frames = 20;
  int width = 128;
  int height = 128;
  std::uint64_t seed = 0;
  double blend_fraction = 0.25;
};

struct TrainOptions {
  std::string config_path;  // empty = defaults
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string data_root;
  std::string out_dir;
  std::string resume;  // checkpoint to continue from
  bool allow_config_mismatch = false;
  bool quiet = false;
};

struct RenderOptions {
  std::string checkpoint;
  std::string poses;
  std::optional<int> frame;  // default: first frame in the file
  std::string cameras;
  std::string camera_id;
  std::string out;
  std::string depth_out;  // optional 16-bit depth PNG (millimeters)
  bool keep_background = false;
};

struct AnimateOptions {
  std::string checkpoint;
  std::string poses;
  std::string cameras;
  std::string camera_id;
  std::string out_dir;
  bool keep_background = false;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data_root;
  std::string split = "test";
  std::string out_csv;  // empty = stdout only
  bool keep_background = true;
};

struct ExportOptions {
  std::string checkpoint;
  std::string out;
  bool float32 = false;
  bool human_only = false;
};

struct MaskOptions {
  std::string checkpoint;
  std::string poses;
  std::optional<int> frame;
  std::string cameras;
  std::string camera_id;
  double threshold = 10.0;
  std::string out;
};

struct TimingOptions {
  std::string checkpoint;
  std::string poses;
  std::string cameras;
  std::string camera_id;
  std::string out_dir;  // where frames are saved during timing
  std::string out_csv;  // empty = stdout only
  bool keep_background = false;
};

/// Column names of the timing report, in order.
std::vector<std::string> timing_columns();

int cmd_synth(const SynthOptions& o, std::ostream& log);
int cmd_train(const TrainOptions& o, std::ostream& log);
int cmd_render(const RenderOptions& o, std::ostream& log);
int cmd_animate(const AnimateOptions& o, std::ostream& log);
int cmd_eval(const EvalOptions& o, std::ostream& out);
int cmd_export(const ExportOptions& o, std::ostream& log);
int cmd_mask(const MaskOptions& o, std::ostream& log);
int cmd_timing(const TimingOptions& o, std::ostream& out);

} // namespace gavatar
