#pragma once

#include "gavatar/body_model.h"
#include "gavatar/common.h"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gavatar {

/// Which mesh face a Gaussian is attached to, or the background.
class ParentId {
 public:
  static constexpr std::int32_t kBackgroundCode = -1;

  constexpr ParentId() = default;
  static constexpr ParentId face(std::int32_t index) { return ParentId(index); }
  static constexpr ParentId background() { return ParentId(kBackgroundCode); }
  static constexpr ParentId from_code(std::int32_t code) { return ParentId(code); }

  constexpr bool is_background() const { return code_ == kBackgroundCode; }
  constexpr bool is_face() const { return code_ >= 0; }
  constexpr std::int32_t face_index() const { return code_; }
  constexpr std::int32_t code() const { return code_; }

  friend constexpr bool operator==(ParentId, ParentId) = default;

 private:
  constexpr explicit ParentId(std::int32_t code) : code_(code) {}
  std::int32_t code_ = kBackgroundCode;
};

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Structure-of-arrays Gaussian set. SH row layout: coefficient k, channel c at column 3k + c.
struct GaussianCloud {
  int sh_degree = 0;
  Points3 centers;
  Quats rotations;
  Points3 log_scales;
  Eigen::VectorXd opacity_logits;
  RowMatrix sh;
  std::vector<ParentId> parents;
  Points3 canonical_normals;

  explicit GaussianCloud(int degree = 0) : sh_degree(degree) { resize(0); }

  int size() const { return static_cast<int>(centers.rows()); }
  int sh_count() const { return sh_coeff_count(sh_degree); }
  bool empty() const { return size() == 0; }

  void resize(int n);
  /// Gather rows in the given order.
  GaussianCloud select(std::span<const int> indices) const;
  /// Indices of Face-parented Gaussians, in cloud order.
  std::vector<int> human_indices() const;
  std::vector<int> background_indices() const;
  int human_count() const;
};

inline constexpr double kInitialOpacity = 0.1;
/// Real SH basis constant for degree 0.
inline constexpr double kShC0 = 0.28209479177387814;

double sigmoid(double x);
double logit(double p);

/// Problems found by audit_cloud; empty when the cloud is well-formed.
std::vector<std::string> audit_cloud(const GaussianCloud& cloud, int face_count);

/// One Gaussian per canonical face at its centroid, oriented by the face frame.
/// A non-positive init_scale selects the mean edge length of the mesh.
GaussianCloud init_human_gaussians(const PosedBody& canonical, int sh_degree, double init_scale = 0.0);

/// Uniform random points on a sphere about the origin, all parented to Background.
GaussianCloud init_background_gaussians(int count, double radius, std::uint64_t seed, int sh_degree);

GaussianCloud concat(const GaussianCloud& a, const GaussianCloud& b);

/// Binary little-endian PLY with the conventional splatting property names plus an
/// int "parent" property (-1 = background). Stored as doubles unless float32 is set.
void export_pointcloud(const GaussianCloud& cloud, const std::string& path, bool float32 = false);
GaussianCloud import_pointcloud(const std::string& path);

} // namespace gavatar
