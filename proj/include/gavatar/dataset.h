#pragma once

// On-disk scene layout (all text files UTF-8, '#' starts a comment line):
//
//   <root>/cameras.txt        camera blocks, see write_cameras
//   <root>/poses.txt          "joints J" header, then one line per frame:
//                             t tx ty tz  r0x r0y r0z ... r(J-1)z
//   <root>/shape.txt          B shape coefficients on one line (may be empty)
//   <root>/body.bin           body model container
//   <root>/images/<cam>/<t:06d>.png
//   <root>/masks/<cam>/<t:06d>.png   optional ground-truth masks

#include "gavatar/body_model.h"
#include "gavatar/config.h"
#include "gavatar/image.h"
#include "gavatar/rasterizer.h"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gavatar {

struct NamedCamera {
  std::string id;
  Camera camera;
};

struct FrameRecord {
  std::string camera_id;
  int frame = 0;
  std::string image_path;
  std::string mask_path;  // empty when absent
  PoseParams pose;
};

enum class DatasetSplit { All, Train, Test };

struct SceneDataset {
  std::string root;
  std::vector<NamedCamera> cameras;
  std::vector<FrameRecord> frames;
  ShapeParams shape;
  BodyModel body;

  const Camera& camera(const std::string& id) const;
};

/// Block per camera:
///   camera <id>
///   width <int>  height <int>  fx fy cx cy near far <double>  (one "key value" per line)
///   world_to_camera   followed by three lines of four numbers (R | t)
///   end
void write_cameras(const std::vector<NamedCamera>& cameras, const std::string& path);
std::vector<NamedCamera> read_cameras(const std::string& path);

void write_poses(const std::map<int, PoseParams>& poses, int joint_count, const std::string& path);
std::map<int, PoseParams> read_poses(const std::string& path);

void write_shape(const ShapeParams& shape, const std::string& path);
ShapeParams read_shape(const std::string& path);

std::string frame_file_name(int frame);

/// Reads width and height from a PNG header without decoding.
std::pair<int, int> png_size(const std::string& path);

SceneDataset load_dataset(const std::string& root, const RunConfig& config, DatasetSplit split);

struct SyntheticSceneOptions {
  int width = 128;
  int height = 128;
  double ring_radius = 3.0;
  /// Fraction of the half image width covered by the body's bounding sphere.
  double fill = 0.8;
  /// Procedural backdrop sphere radius; <= 0 selects twice the ring radius.
  double backdrop_radius = 0.0;
  double pose_amplitude = 0.5;  // radians
};

struct SyntheticScene {
  std::vector<NamedCamera> cameras;
  std::map<int, PoseParams> poses;
  Vec3 ring_center = Vec3::Zero();
  double backdrop_radius = 0.0;
};

/// Renders the body with a z-buffered triangle rasterizer (2x2 supersampling,
/// per-vertex procedural color) in front of a procedural backdrop sphere, and
/// writes the full scene layout. Deterministic for fixed inputs.
SyntheticScene generate_synthetic_scene(const BodyModel& body, int cameras, int frames, std::uint64_t seed,
                                        const std::string& out_dir, const SyntheticSceneOptions& options = {});

/// Reference rendering used by the generator; mask is majority sample coverage.
struct ReferenceRender {
  Image rgb;
  Image mask;
};
/// The backdrop is a sphere whose color depends on direction from its center.
ReferenceRender render_reference(const BodyModel& body, const PosedBody& posed, const Camera& camera,
                                 double backdrop_radius, const Vec3& backdrop_center);

} // namespace gavatar
