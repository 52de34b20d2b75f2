#include "gavatar/deformation.h"

#include "gavatar/face_grid.h"
#include "gavatar/parallel.h"
#include "gavatar/rotation.h"

#include <Eigen/SVD>

#include <cmath>

namespace gavatar {

bool RigidTransform::is_valid(double tol) const { return is_rotation(rotation, tol) && translation.allFinite(); }

FaceTransformSet FaceTransformSet::identity(int face_count) {
  FaceTransformSet s;
  s.transforms.assign(face_count, RigidTransform::identity());
  return s;
}

bool fit_face_transform(const Vec3 (&canonical)[3], const Vec3& canonical_normal, const Vec3 (&posed)[3],
                        const Vec3& posed_normal, RigidTransform* out) {
  const Vec3 cc = (canonical[0] + canonical[1] + canonical[2]) / 3.0;
  const Vec3 cp = (posed[0] + posed[1] + posed[2]) / 3.0;
  const double area_c = 0.5 * (canonical[1] - canonical[0]).cross(canonical[2] - canonical[0]).norm();
  const double area_p = 0.5 * (posed[1] - posed[0]).cross(posed[2] - posed[0]).norm();
  if (area_c < kDegenerateFaceArea || area_p < kDegenerateFaceArea) {
    out->rotation.setIdentity();
    out->translation = cp - cc;
    return false;
  }
  // Normal lever arm at triangle scale keeps the four points comparably weighted.
  const double lever = ((canonical[1] - canonical[0]).norm() + (canonical[2] - canonical[1]).norm() +
                        (canonical[0] - canonical[2]).norm()) / 3.0;
  Mat3 h = Mat3::Zero();
  for (int k = 0; k < 3; ++k) {
    h += (canonical[k] - cc) * (posed[k] - cp).transpose();
  }
  h += (lever * canonical_normal) * (lever * posed_normal).transpose();

  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  out->rotation = v * d * u.transpose();
  out->translation = cp - out->rotation * cc;
  return true;
}

FaceTransformSet compute_pvd(const PosedBody& canonical, const PosedBody& posed) {
  if (canonical.face_count() != posed.face_count() || !canonical.faces || !posed.faces) {
    throw ShapeError("compute_pvd: canonical and posed bodies differ in face count");
  }
  const FaceIndices& faces = *canonical.faces;
  const int f_count = canonical.face_count();
  FaceTransformSet out;
  out.transforms.resize(f_count);
  std::vector<char> degenerate(f_count, 0);
  parallel_for(0, f_count, [&](int lo, int hi) {
    for (int f = lo; f < hi; ++f) {
      Vec3 c[3], p[3];
      for (int k = 0; k < 3; ++k) {
        c[k] = canonical.vertices.row(faces(f, k)).transpose();
        p[k] = posed.vertices.row(faces(f, k)).transpose();
      }
      const bool ok = fit_face_transform(c, canonical.face_normals.row(f).transpose(), p,
                                         posed.face_normals.row(f).transpose(), &out.transforms[f]);
      degenerate[f] = ok ? 0 : 1;
    }
  }, 256);
  for (int f = 0; f < f_count; ++f) {
    if (degenerate[f] != 0) {
      out.degenerate_faces.push_back(f);
    }
  }
  return out;
}

GaussianCloud pose_gaussians(const GaussianCloud& cloud, const FaceTransformSet& transforms) {
  GaussianCloud out = cloud;
  std::vector<Vec4> face_quats(transforms.size());
  for (int f = 0; f < transforms.size(); ++f) {
    face_quats[f] = quat_from_matrix(transforms.transforms[f].rotation);
  }
  for (int i = 0; i < cloud.size(); ++i) {
    const ParentId p = cloud.parents[i];
    if (!p.is_face()) {
      continue;
    }
    if (p.face_index() >= transforms.size()) {
      throw ShapeError("pose_gaussians: parent face " + std::to_string(p.face_index()) + " out of range");
    }
    const RigidTransform& t = transforms.transforms[p.face_index()];
    out.centers.row(i) = t.apply(cloud.centers.row(i).transpose()).transpose();
    out.rotations.row(i) = quat_multiply(face_quats[p.face_index()], cloud.rotations.row(i).transpose()).transpose();
  }
  return out;
}

GaussianCloud apply_residuals(const GaussianCloud& cloud, const std::vector<ResidualTransform>& residuals) {
  GaussianCloud out = cloud;
  int h = 0;
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.parents[i].is_face()) {
      continue;
    }
    if (h >= static_cast<int>(residuals.size())) {
      throw ShapeError("apply_residuals: fewer residuals than human Gaussians");
    }
    const ResidualTransform& r = residuals[h++];
    out.centers.row(i) += r.translation.transpose();
    out.rotations.row(i) = quat_multiply(r.rotation, cloud.rotations.row(i).transpose()).transpose();
  }
  if (h != static_cast<int>(residuals.size())) {
    throw ShapeError("apply_residuals: more residuals than human Gaussians");
  }
  return out;
}

GaussianCloud unpose_gaussians(const GaussianCloud& cloud, const FaceTransformSet& t_set,
                               const std::vector<ResidualTransform>& r_set) {
  if (static_cast<int>(r_set.size()) != cloud.human_count()) {
    throw ShapeError("unpose_gaussians: residual count " + std::to_string(r_set.size()) +
                     " differs from human Gaussian count " + std::to_string(cloud.human_count()));
  }
  GaussianCloud out = cloud;
  int h = 0;
  for (int i = 0; i < cloud.size(); ++i) {
    const ParentId p = cloud.parents[i];
    if (!p.is_face()) {
      continue;
    }
    if (p.face_index() >= t_set.size()) {
      throw ShapeError("unpose_gaussians: parent face out of range");
    }
    const ResidualTransform& r = r_set[h++];
    const RigidTransform& t = t_set.transforms[p.face_index()];
    Vec3 c = cloud.centers.row(i).transpose() - r.translation;
    Vec4 q = quat_multiply(quat_conjugate(r.rotation), cloud.rotations.row(i).transpose());
    c = t.rotation.transpose() * (c - t.translation);
    q = quat_multiply(quat_conjugate(quat_from_matrix(t.rotation)), q);
    out.centers.row(i) = c.transpose();
    out.rotations.row(i) = quat_normalized(q).transpose();
  }
  return out;
}

DirectionField relative_sh_directions(const GaussianCloud& cloud, const Vec3& camera_center) {
  if (!camera_center.allFinite()) {
    throw std::invalid_argument("relative_sh_directions: non-finite camera center");
  }
  DirectionField out;
  out.directions.resize(cloud.size(), 3);
  for (int i = 0; i < cloud.size(); ++i) {
    const Vec3 d = camera_center - cloud.centers.row(i).transpose();
    const double n = d.norm();
    if (n < 1e-12) {
      out.directions.row(i) = Vec3::UnitZ().transpose();
      out.flagged.push_back(i);
    } else {
      out.directions.row(i) = (d / n).transpose();
    }
  }
  return out;
}

Points3 corrected_sh_directions(const GaussianCloud& cloud, const FaceTransformSet& t_set,
                                const std::vector<ResidualTransform>& r_set) {
  const int humans = cloud.human_count();
  if (static_cast<int>(r_set.size()) != humans) {
    throw ShapeError("corrected_sh_directions: residual count differs from human Gaussian count");
  }
  Points3 out(humans, 3);
  int h = 0;
  for (int i = 0; i < cloud.size(); ++i) {
    const ParentId p = cloud.parents[i];
    if (!p.is_face()) {
      continue;
    }
    const Vec3 n = cloud.canonical_normals.row(i).transpose();
    if (std::abs(n.norm() - 1.0) > 1e-6) {
      throw std::logic_error("corrected_sh_directions: Gaussian " + std::to_string(i) + " has no canonical normal");
    }
    const Vec3 d = quat_to_matrix(r_set[h].rotation) * (t_set.transforms[p.face_index()].rotation * n);
    out.row(h++) = d.transpose();
  }
  return out;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point by Voronoi region classification.
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

GaussianCloud reassign_parents(const GaussianCloud& cloud, const PosedBody& canonical, double tau) {
  GaussianCloud out = cloud;
  if (!canonical.faces) {
    throw ShapeError("reassign_parents: canonical body has no faces");
  }
  const FaceGrid grid(canonical.vertices, *canonical.faces);
  parallel_for(0, cloud.size(), [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      if (!cloud.parents[i].is_face()) {
        continue;
      }
      const FaceGrid::Hit hit = grid.nearest(cloud.centers.row(i).transpose());
      out.parents[i] = (hit.face < 0 || hit.distance > tau) ? ParentId::background() : ParentId::face(hit.face);
    }
  }, 128);
  return out;
}

GaussianCloud filter_background(const GaussianCloud& cloud) {
  const auto keep = cloud.human_indices();
  return cloud.select(keep);
}

} // namespace gavatar
