#include "gavatar/body_model.h"

#include "gavatar/container.h"
#include "gavatar/rotation.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gavatar {

namespace {

struct BoneSpec {
  int parent;
  Vec3 start;
  Vec3 tip;
  double radius;
};

// Humanoid T-pose layout (y up, meters). Joints beyond this table extend the
// chain two entries back, continuing its direction.
std::vector<BoneSpec> synthetic_skeleton(int joints) {
  std::vector<BoneSpec> base = {
      {-1, {0.0, 0.0, 0.0}, {0.0, 0.35, 0.0}, 0.12},      // pelvis
      {0, {0.0, 0.35, 0.0}, {0.0, 0.75, 0.0}, 0.13},      // chest
      {1, {0.15, 0.6, 0.0}, {0.55, 0.6, 0.0}, 0.05},      // left arm
      {1, {-0.15, 0.6, 0.0}, {-0.55, 0.6, 0.0}, 0.05},    // right arm
      {0, {0.1, 0.0, 0.0}, {0.1, -0.45, 0.0}, 0.07},      // left thigh
      {0, {-0.1, 0.0, 0.0}, {-0.1, -0.45, 0.0}, 0.07},    // right thigh
      {4, {0.1, -0.45, 0.0}, {0.1, -0.9, 0.0}, 0.055},    // left shin
      {5, {-0.1, -0.45, 0.0}, {-0.1, -0.9, 0.0}, 0.055},  // right shin
  };
  std::vector<BoneSpec> out(base.begin(), base.begin() + std::min<int>(joints, static_cast<int>(base.size())));
  for (int j = static_cast<int>(out.size()); j < joints; ++j) {
    const BoneSpec& p = out[j - 2];
    out.push_back({j - 2, p.tip, p.tip + 0.8 * (p.tip - p.start), 0.8 * p.radius});
  }
  return out;
}

Mat3 orthonormal_frame(const Vec3& axis) {
  const Vec3 z = axis.normalized();
  const Vec3 helper = std::abs(z.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 u = helper.cross(z).normalized();
  const Vec3 w = z.cross(u);
  Mat3 f;
  f.col(0) = u;
  f.col(1) = w;
  f.col(2) = z;
  return f;
}

} // namespace

int synthetic_ring_intervals(int segments) { return std::max(2, segments / 2); }

void BodyModel::validate() const {
  const int v = vertex_count();
  const int j = joint_count();
  if (!faces) {
    throw ValidationError("faces: missing");
  }
  if (skinning_weights.rows() != v || skinning_weights.cols() != j) {
    throw ValidationError("skinning_weights: expected V×J");
  }
  if (joint_regressor.rows() != j || joint_regressor.cols() != v) {
    throw ValidationError("joint_regressor: expected J×V");
  }
  if (shape_blendshapes.size() != 0 && shape_blendshapes.rows() != 3 * v) {
    throw ValidationError("shape_blendshapes: expected 3V rows");
  }
  for (int f = 0; f < face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int idx = (*faces)(f, k);
      if (idx < 0 || idx >= v) {
        std::ostringstream msg;
        msg << "faces: face " << f << " references vertex " << idx << " outside [0, " << v << ")";
        throw ValidationError(msg.str());
      }
    }
  }
  for (int i = 0; i < v; ++i) {
    const auto row = skinning_weights.row(i);
    if ((row.array() < 0.0).any()) {
      throw ValidationError("skinning_weights: negative weight at vertex " + std::to_string(i));
    }
    const double s = row.sum();
    if (std::abs(s - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << "skinning_weights: row " << i << " sums to " << s << " (expected 1)";
      throw ValidationError(msg.str());
    }
  }
  if (!template_vertices.allFinite()) {
    throw ValidationError("template_vertices: non-finite entries");
  }
  (void)topological_order();
}

std::vector<int> BodyModel::topological_order() const {
  const int j = joint_count();
  int roots = 0;
  for (int i = 0; i < j; ++i) {
    const int p = kinematic_parents[i];
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= j || p == i) {
      throw ValidationError("kinematic_parents: invalid parent index for joint " + std::to_string(i));
    }
  }
  if (roots != 1) {
    throw ValidationError("kinematic_parents: expected exactly one root, found " + std::to_string(roots));
  }
  // Depth via walking to the root; a walk longer than J means a cycle.
  std::vector<int> depth(j, 0);
  for (int i = 0; i < j; ++i) {
    int d = 0;
    for (int p = kinematic_parents[i]; p != -1; p = kinematic_parents[p]) {
      if (++d > j) {
        throw ValidationError("kinematic_parents: cycle through joint " + std::to_string(i));
      }
    }
    depth[i] = d;
  }
  std::vector<int> order(j);
  for (int i = 0; i < j; ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth[a] < depth[b]; });
  return order;
}

PoseParams PoseParams::canonical(int joint_count) {
  PoseParams p;
  p.rotations = Points3::Zero(joint_count, 3);
  return p;
}

BodyModel make_synthetic_body(int joints, int segments, const SyntheticBodyOptions& options) {
  if (joints < 2 || segments < 3) {
    throw std::invalid_argument("make_synthetic_body: need joints >= 2 and segments >= 3");
  }
  const auto bones = synthetic_skeleton(joints);
  const int s_count = segments;
  const int k_count = synthetic_ring_intervals(segments);
  const int v_per_bone = s_count * (k_count + 1) + 2;
  const int f_per_bone = 2 * s_count * (k_count + 1);

  BodyModel m;
  m.template_vertices.resize(joints * v_per_bone, 3);
  auto faces = std::make_shared<FaceIndices>(joints * f_per_bone, 3);
  m.skinning_weights = RowMatrix::Zero(joints * v_per_bone, joints);
  m.joint_regressor = RowMatrix::Zero(joints, joints * v_per_bone);
  m.shape_blendshapes = RowMatrix::Zero(3 * joints * v_per_bone, 2);
  m.kinematic_parents.resize(joints);

  // First child continuing the chain from a bone's tip, if any.
  std::vector<int> chain_child(joints, -1);
  for (int j = 0; j < joints; ++j) {
    m.kinematic_parents[j] = bones[j].parent;
    const int p = bones[j].parent;
    if (p >= 0 && chain_child[p] < 0 && (bones[p].tip - bones[j].start).norm() < 1e-12) {
      chain_child[p] = j;
    }
  }

  const double blend = options.blend_fraction;
  auto falloff = [blend](double dist) {
    if (blend <= 0.0 || dist >= blend) {
      return 0.0;
    }
    const double u = 1.0 - dist / blend;
    return 0.5 * u * u;
  };

  int face_cursor = 0;
  for (int j = 0; j < joints; ++j) {
    const BoneSpec& b = bones[j];
    const Vec3 axis = b.tip - b.start;
    const Mat3 frame = orthonormal_frame(axis);
    const int base = j * v_per_bone;

    auto set_weights = [&](int vi, double s) {
      double w_self = 1.0, w_parent = 0.0, w_child = 0.0;
      if (b.parent >= 0) {
        w_parent = falloff(s);
      }
      if (chain_child[j] >= 0) {
        w_child = falloff(1.0 - s);
      }
      const double total = w_self + w_parent + w_child;
      m.skinning_weights(vi, j) += w_self / total;
      if (w_parent > 0.0) {
        m.skinning_weights(vi, b.parent) += w_parent / total;
      }
      if (w_child > 0.0) {
        m.skinning_weights(vi, chain_child[j]) += w_child / total;
      }
    };
    auto set_shape = [&](int vi, const Vec3& radial) {
      for (int c = 0; c < 3; ++c) {
        m.shape_blendshapes(3 * vi + c, 0) = 0.02 * radial[c];
        m.shape_blendshapes(3 * vi + c, 1) = 0.05 * m.template_vertices(vi, c);
      }
    };

    for (int ring = 0; ring <= k_count; ++ring) {
      const double s = static_cast<double>(ring) / k_count;
      const double radius = b.radius * (0.8 + 0.2 * std::sin(std::numbers::pi * s));
      for (int seg = 0; seg < s_count; ++seg) {
        const double phi = 2.0 * std::numbers::pi * seg / s_count;
        const Vec3 radial = std::cos(phi) * frame.col(0) + std::sin(phi) * frame.col(1);
        const int vi = base + ring * s_count + seg;
        m.template_vertices.row(vi) = (b.start + s * axis + radius * radial).transpose();
        set_weights(vi, s);
        set_shape(vi, radial);
      }
    }
    const int cap_start = base + s_count * (k_count + 1);
    const int cap_end = cap_start + 1;
    m.template_vertices.row(cap_start) = b.start.transpose();
    m.template_vertices.row(cap_end) = b.tip.transpose();
    set_weights(cap_start, 0.0);
    set_weights(cap_end, 1.0);
    set_shape(cap_start, Vec3::Zero());
    set_shape(cap_end, Vec3::Zero());
    m.joint_regressor(j, cap_start) = 1.0;

    auto emit = [&](int a, int c, int d, const Vec3& outward_ref) {
      const Vec3 pa = m.template_vertices.row(a).transpose();
      const Vec3 pc = m.template_vertices.row(c).transpose();
      const Vec3 pd = m.template_vertices.row(d).transpose();
      const Vec3 n = (pc - pa).cross(pd - pa);
      const Vec3 centroid = (pa + pc + pd) / 3.0;
      if (n.dot(centroid - outward_ref) >= 0.0) {
        (*faces).row(face_cursor++) << a, c, d;
      } else {
        (*faces).row(face_cursor++) << a, d, c;
      }
    };
    for (int ring = 0; ring < k_count; ++ring) {
      const Vec3 ref = b.start + (ring + 0.5) / k_count * axis;
      for (int seg = 0; seg < s_count; ++seg) {
        const int next = (seg + 1) % s_count;
        const int v00 = base + ring * s_count + seg;
        const int v01 = base + ring * s_count + next;
        const int v10 = base + (ring + 1) * s_count + seg;
        const int v11 = base + (ring + 1) * s_count + next;
        // Outward reference is the axis point at the quad's height, so orientation is radial.
        emit(v00, v01, v11, ref);
        emit(v00, v11, v10, ref);
      }
    }
    for (int seg = 0; seg < s_count; ++seg) {
      const int next = (seg + 1) % s_count;
      emit(cap_start, base + seg, base + next, b.start + 0.5 * axis);
      emit(cap_end, base + k_count * s_count + seg, base + k_count * s_count + next, b.start + 0.5 * axis);
    }
  }
  m.faces = std::move(faces);
  return m;
}

Points3 shaped_template(const BodyModel& model, const ShapeParams& shape) {
  Points3 v = model.template_vertices;
  const int b = std::min<int>(model.shape_count(), static_cast<int>(shape.betas.size()));
  if (b > 0) {
    const Eigen::VectorXd offsets = model.shape_blendshapes.leftCols(b) * shape.betas.head(b);
    for (int i = 0; i < v.rows(); ++i) {
      v(i, 0) += offsets[3 * i];
      v(i, 1) += offsets[3 * i + 1];
      v(i, 2) += offsets[3 * i + 2];
    }
  }
  return v;
}

double mean_edge_length(const Points3& vertices, const FaceIndices& faces) {
  if (faces.rows() == 0) {
    return 0.0;
  }
  double total = 0.0;
  for (int f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      total += (vertices.row(faces(f, (k + 1) % 3)) - vertices.row(faces(f, k))).norm();
    }
  }
  return total / (3.0 * faces.rows());
}

void compute_face_geometry(const Points3& vertices, const FaceIndices& faces, PosedBody& out,
                           const Points3* fallback_normals) {
  const int f_count = static_cast<int>(faces.rows());
  out.face_centers.resize(f_count, 3);
  out.face_normals.resize(f_count, 3);
  out.face_rotations.resize(f_count);
  out.degenerate_faces.clear();
  for (int f = 0; f < f_count; ++f) {
    const Vec3 a = vertices.row(faces(f, 0)).transpose();
    const Vec3 b = vertices.row(faces(f, 1)).transpose();
    const Vec3 c = vertices.row(faces(f, 2)).transpose();
    out.face_centers.row(f) = ((a + b + c) / 3.0).transpose();
    const Vec3 e1 = b - a;
    const Vec3 cross = e1.cross(c - a);
    const double area = 0.5 * cross.norm();
    Vec3 n;
    Vec3 x;
    if (area < kDegenerateFaceArea || e1.norm() == 0.0) {
      out.degenerate_faces.push_back(f);
      n = fallback_normals != nullptr ? Vec3(fallback_normals->row(f).transpose()) : Vec3::UnitZ();
      if (n.norm() == 0.0) {
        n = Vec3::UnitZ();
      }
      n.normalize();
      const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
      x = helper.cross(n).normalized();
    } else {
      n = cross / cross.norm();
      x = e1 / e1.norm();
    }
    out.face_normals.row(f) = n.transpose();
    Mat3 r;
    r.col(0) = x;
    r.col(1) = n.cross(x);
    r.col(2) = n;
    out.face_rotations[f] = r;
  }
}

PosedBody pose_body(const BodyModel& model, const ShapeParams& shape, const PoseParams& pose) {
  const int j_count = model.joint_count();
  if (pose.rotations.rows() != j_count) {
    throw ShapeError("pose_body: pose has " + std::to_string(pose.rotations.rows()) + " joints, model has " +
                     std::to_string(j_count));
  }
  if (shape.betas.size() > model.shape_count()) {
    throw ShapeError("pose_body: more shape coefficients than blendshapes");
  }
  if (!pose.rotations.allFinite() || !pose.translation.allFinite()) {
    throw std::invalid_argument("pose_body: non-finite pose parameters");
  }

  const Points3 shaped = shaped_template(model, shape);
  const Points3 rest_joints = model.joint_regressor * shaped;

  // Global joint transforms along the kinematic chain.
  std::vector<Mat3> g_rot(j_count);
  std::vector<Vec3> g_trans(j_count);
  for (int j : model.topological_order()) {
    const Mat3 local = axis_angle_to_matrix(pose.rotations.row(j).transpose());
    const int p = model.kinematic_parents[j];
    const Vec3 rest = rest_joints.row(j).transpose();
    if (p < 0) {
      g_rot[j] = local;
      g_trans[j] = rest;
    } else {
      const Vec3 offset = rest - Vec3(rest_joints.row(p).transpose());
      g_rot[j] = g_rot[p] * local;
      g_trans[j] = g_rot[p] * offset + g_trans[p];
    }
  }
  // Skinning transforms relative to the rest pose.
  std::vector<Eigen::Matrix<double, 3, 4>> skin(j_count);
  for (int j = 0; j < j_count; ++j) {
    skin[j].leftCols<3>() = g_rot[j];
    skin[j].col(3) = g_trans[j] - g_rot[j] * Vec3(rest_joints.row(j).transpose()) + pose.translation;
  }

  PosedBody out;
  out.faces = model.faces;
  out.vertices.resize(shaped.rows(), 3);
  for (int v = 0; v < shaped.rows(); ++v) {
    Eigen::Matrix<double, 3, 4> blended = Eigen::Matrix<double, 3, 4>::Zero();
    for (int j = 0; j < j_count; ++j) {
      const double w = model.skinning_weights(v, j);
      if (w != 0.0) {
        blended += w * skin[j];
      }
    }
    const Vec3 p = shaped.row(v).transpose();
    out.vertices.row(v) = (blended.leftCols<3>() * p + blended.col(3)).transpose();
  }
  out.joints.resize(j_count, 3);
  for (int j = 0; j < j_count; ++j) {
    out.joints.row(j) = (g_trans[j] + pose.translation).transpose();
  }

  compute_face_geometry(out.vertices, *model.faces, out, nullptr);
  if (!out.degenerate_faces.empty()) {
    PosedBody rest;
    compute_face_geometry(shaped, *model.faces, rest, nullptr);
    compute_face_geometry(out.vertices, *model.faces, out, &rest.face_normals);
  }
  return out;
}

BodyModel body_model_from_container(const ArrayContainer& c, const std::string& prefix) {
  auto dims = [&](const std::string& name, std::size_t rank) {
    const auto& s = c.shape(prefix + name);
    if (s.size() != rank) {
      throw ValidationError(name + ": expected rank " + std::to_string(rank));
    }
    return s;
  };
  BodyModel m;
  const auto vs = dims("template_vertices", 2);
  if (vs[1] != 3) {
    throw ValidationError("template_vertices: expected V×3");
  }
  const auto vdata = c.get_f64(prefix + "template_vertices");
  m.template_vertices = Eigen::Map<const Points3>(vdata.data(), static_cast<Eigen::Index>(vs[0]), 3);

  const auto fs = dims("faces", 2);
  if (fs[1] != 3) {
    throw ValidationError("faces: expected F×3");
  }
  const auto fdata = c.get_i32(prefix + "faces");
  m.faces = std::make_shared<FaceIndices>(Eigen::Map<const FaceIndices>(fdata.data(), static_cast<Eigen::Index>(fs[0]), 3));

  const auto ws = dims("skinning_weights", 2);
  const auto wdata = c.get_f64(prefix + "skinning_weights");
  m.skinning_weights = Eigen::Map<const RowMatrix>(wdata.data(), static_cast<Eigen::Index>(ws[0]),
                                                   static_cast<Eigen::Index>(ws[1]));
  const auto rs = dims("joint_regressor", 2);
  const auto rdata = c.get_f64(prefix + "joint_regressor");
  m.joint_regressor = Eigen::Map<const RowMatrix>(rdata.data(), static_cast<Eigen::Index>(rs[0]),
                                                  static_cast<Eigen::Index>(rs[1]));
  dims("kinematic_parents", 1);
  const auto parents = c.get_i32(prefix + "kinematic_parents");
  m.kinematic_parents.assign(parents.begin(), parents.end());
  if (c.contains(prefix + "shape_blendshapes")) {
    const auto bs = dims("shape_blendshapes", 2);
    const auto bdata = c.get_f64(prefix + "shape_blendshapes");
    m.shape_blendshapes = Eigen::Map<const RowMatrix>(bdata.data(), static_cast<Eigen::Index>(bs[0]),
                                                      static_cast<Eigen::Index>(bs[1]));
  } else {
    m.shape_blendshapes.resize(3 * m.vertex_count(), 0);
  }
  m.validate();
  return m;
}

BodyModel load_body_model(const std::string& path) {
  return body_model_from_container(ArrayContainer::read(path, kBodyModelMagic), "");
}

void body_model_to_container(const BodyModel& model, ArrayContainer& c, const std::string& prefix) {
  model.validate();
  using U = std::uint64_t;
  const auto v = static_cast<U>(model.vertex_count());
  const auto j = static_cast<U>(model.joint_count());
  c.put_f64(prefix + "template_vertices", {v, 3}, {model.template_vertices.data(), static_cast<std::size_t>(model.template_vertices.size())});
  c.put_i32(prefix + "faces", {static_cast<U>(model.face_count()), 3}, {model.faces->data(), static_cast<std::size_t>(model.faces->size())});
  c.put_f64(prefix + "skinning_weights", {v, j}, {model.skinning_weights.data(), static_cast<std::size_t>(model.skinning_weights.size())});
  c.put_f64(prefix + "joint_regressor", {j, v}, {model.joint_regressor.data(), static_cast<std::size_t>(model.joint_regressor.size())});
  std::vector<std::int32_t> parents(model.kinematic_parents.begin(), model.kinematic_parents.end());
  c.put_i32(prefix + "kinematic_parents", {j}, parents);
  c.put_f64(prefix + "shape_blendshapes", {3 * v, static_cast<U>(model.shape_count())},
            {model.shape_blendshapes.data(), static_cast<std::size_t>(model.shape_blendshapes.size())});
}

void save_body_model(const BodyModel& model, const std::string& path) {
  ArrayContainer c;
  body_model_to_container(model, c, "");
  c.write(path, kBodyModelMagic);
}

} // namespace gavatar
