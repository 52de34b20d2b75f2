#pragma once

// Parametric skinned body: template mesh, skinning weights, joint regressor and
// kinematic tree, posed by linear blend skinning.

#include "gavatar/common.h"

#include <memory>
#include <string>
#include <vector>

namespace gavatar {

struct BodyModel {
  Points3 template_vertices;        // V×3, meters
  std::shared_ptr<const FaceIndices> faces;  // F×3
  RowMatrix skinning_weights;       // V×J
  RowMatrix joint_regressor;        // J×V
  std::vector<int> kinematic_parents;  // root has parent -1
  RowMatrix shape_blendshapes;      // 3V×B, row 3v+k is coordinate k of vertex v

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int face_count() const { return faces ? static_cast<int>(faces->rows()) : 0; }
  int joint_count() const { return static_cast<int>(kinematic_parents.size()); }
  int shape_count() const { return static_cast<int>(shape_blendshapes.cols()); }

  /// Throws ValidationError naming the offending array.
  void validate() const;

  /// Joint indices ordered so that every parent precedes its children.
  std::vector<int> topological_order() const;
};

struct PoseParams {
  Points3 rotations;  // J×3 axis-angle, radians
  Vec3 translation = Vec3::Zero();

  static PoseParams canonical(int joint_count);
};

struct ShapeParams {
  Eigen::VectorXd betas;
};

struct PosedBody {
  Points3 vertices;
  Points3 joints;
  Points3 face_centers;
  Points3 face_normals;
  std::vector<Mat3> face_rotations;  // columns: edge direction, normal×edge, normal
  std::shared_ptr<const FaceIndices> faces;
  std::vector<int> degenerate_faces;

  int face_count() const { return static_cast<int>(face_centers.rows()); }
};

inline constexpr double kDegenerateFaceArea = 1e-12;
inline constexpr char kBodyModelMagic[] = "GAVBODY1";

BodyModel load_body_model(const std::string& path);
void save_body_model(const BodyModel& model, const std::string& path);

class ArrayContainer;
/// Model arrays stored under name prefix; shared by body files and checkpoints.
void body_model_to_container(const BodyModel& model, ArrayContainer& c, const std::string& prefix);
BodyModel body_model_from_container(const ArrayContainer& c, const std::string& prefix);

struct SyntheticBodyOptions {
  /// Fraction of each bone over which skinning blends into the parent / chain child.
  /// 0 binds every capsule rigidly to its own bone.
  double blend_fraction = 0.25;
};

/// Deterministic tube figure: one capped capsule per joint arranged as a
/// humanoid tree (pelvis, chest, arms, thighs, shins, then chain extensions).
/// With S = segments and K = max(2, S / 2) ring intervals per capsule:
///   V = J * (S * (K + 1) + 2),   F = J * 2 * S * (K + 1).
/// The root joint sits at the world origin. Two shape blendshapes: girth and height.
BodyModel make_synthetic_body(int joints, int segments, const SyntheticBodyOptions& options = {});

int synthetic_ring_intervals(int segments);

PosedBody pose_body(const BodyModel& model, const ShapeParams& shape, const PoseParams& pose);

/// Vertices of the shaped template (no pose).
Points3 shaped_template(const BodyModel& model, const ShapeParams& shape);

/// Centroids, normals and frames for a vertex set. Degenerate faces fall back to
/// the matching row of fallback_normals when given, else +z.
void compute_face_geometry(const Points3& vertices, const FaceIndices& faces, PosedBody& out,
                           const Points3* fallback_normals = nullptr);

double mean_edge_length(const Points3& vertices, const FaceIndices& faces);

} // namespace gavatar
