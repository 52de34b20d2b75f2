#include "doctest.h"
#include "support.h"

#include "gavatar/rotation.h"

#include <Eigen/Geometry>

using namespace gtest;

namespace {

PosedBody canonical_of(const BodyModel& m) { return pose_body(m, {}, PoseParams::canonical(m.joint_count())); }

double max_vertex_error(const FaceTransformSet& d, const PosedBody& canonical, const PosedBody& posed) {
  const FaceIndices& f = *canonical.faces;
  double worst = 0.0;
  for (int i = 0; i < f.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const Vec3 vc = canonical.vertices.row(f(i, k)).transpose();
      const Vec3 vp = posed.vertices.row(f(i, k)).transpose();
      worst = std::max(worst, (d.transforms[i].apply(vc) - vp).norm());
    }
  }
  return worst;
}

// Cloud of human Gaussians scattered around their parent faces plus a few background ones.
GaussianCloud attached_cloud(const PosedBody& canonical, Rng& rng, int n, int background) {
  GaussianCloud c(1);
  c.resize(n + background);
  for (int i = 0; i < n + background; ++i) {
    const bool human = i < n;
    const int face = rng.integer(0, canonical.face_count() - 1);
    const Vec3 base = human ? Vec3(canonical.face_centers.row(face).transpose()) : rng.vec3(-3, 3);
    c.centers.row(i) = (base + rng.vec3(-0.02, 0.02)).transpose();
    c.rotations.row(i) = rng.quat().transpose();
    c.log_scales.row(i) = rng.vec3(-4, -2).transpose();
    c.opacity_logits(i) = rng.normal();
    c.sh.row(i).setRandom();
    c.parents[i] = human ? ParentId::face(face) : ParentId::background();
    c.canonical_normals.row(i) = human ? Vec3(canonical.face_normals.row(face).transpose()) : Vec3::Zero();
  }
  return c;
}

std::vector<ResidualTransform> random_residuals(Rng& rng, int n) {
  std::vector<ResidualTransform> r(n);
  for (auto& x : r) {
    x.translation = rng.vec3(-0.1, 0.1);
    x.rotation = quat_from_axis_angle(rng.unit(), rng.uniform(-0.5, 0.5));
  }
  return r;
}

} // namespace

TEST_CASE("self-alignment gives identity transforms") {
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  const FaceTransformSet d = compute_pvd(c, c);
  REQUIRE(d.size() == m.face_count());
  for (const auto& t : d.transforms) {
    CHECK((t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(t.translation.norm() <= 1e-12);
  }
}

TEST_CASE("global rigid motion is recovered on every face") {
  Rng rng(1);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r0 = rng.rotation();
    const Vec3 t0 = rng.vec3(-1, 1);
    PosedBody moved = c;
    moved.vertices = ((c.vertices * r0.transpose()).rowwise() + t0.transpose()).eval();
    compute_face_geometry(moved.vertices, *moved.faces, moved);
    const FaceTransformSet d = compute_pvd(c, moved);
    for (const auto& t : d.transforms) CHECK((t.rotation - r0).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(max_vertex_error(d, c, moved) <= 1e-9);
  }
}

TEST_CASE("rigidly bound body: per-face fits map canonical vertices exactly") {
  Rng rng(2);
  const BodyModel m = make_synthetic_body(8, 12, {.blend_fraction = 0.0});
  const PosedBody c = canonical_of(m);
  for (int trial = 0; trial < 30; ++trial) {
    const PosedBody p = pose_body(m, {}, random_pose(8, rng, 1.5, 0.5));
    const FaceTransformSet d = compute_pvd(c, p);
    CHECK(d.degenerate_faces.empty());
    CHECK(max_vertex_error(d, c, p) <= 1e-6);
    for (const auto& t : d.transforms) CHECK(t.is_valid(1e-9));
  }
}

TEST_CASE("smoothly skinned body: fits equal an independent least-squares alignment") {
  // The fit minimizes the squared residual of the three centered vertices plus the
  // normal lever; mirrored lever points with weight 1/2 each give the same objective
  // as a plain point-set alignment about the triangle centroid.
  Rng rng(3);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  const FaceIndices& f = *m.faces;
  for (int trial = 0; trial < 5; ++trial) {
    const PosedBody p = pose_body(m, {}, random_pose(8, rng, 1.2, 0.5));
    const FaceTransformSet d = compute_pvd(c, p);
    double worst_r = 0.0, worst_centroid = 0.0;
    for (int i = 0; i < f.rows(); ++i) {
      Eigen::Matrix<double, 3, 5> src, dst;
      double lever = 0.0;
      for (int k = 0; k < 3; ++k) {
        src.col(k) = c.vertices.row(f(i, k)).transpose();
        dst.col(k) = p.vertices.row(f(i, k)).transpose();
        lever += (c.vertices.row(f(i, (k + 1) % 3)) - c.vertices.row(f(i, k))).norm() / 3.0;
      }
      const Vec3 cc = src.leftCols<3>().rowwise().mean(), cp = dst.leftCols<3>().rowwise().mean();
      const double arm = lever / std::sqrt(2.0);
      src.col(3) = cc + arm * c.face_normals.row(i).transpose();
      src.col(4) = cc - arm * c.face_normals.row(i).transpose();
      dst.col(3) = cp + arm * p.face_normals.row(i).transpose();
      dst.col(4) = cp - arm * p.face_normals.row(i).transpose();
      const Eigen::Matrix4d ref = Eigen::umeyama(src, dst, false);
      worst_r = std::max(worst_r, (ref.topLeftCorner<3, 3>() - d.transforms[i].rotation).cwiseAbs().maxCoeff());
      worst_centroid = std::max(worst_centroid, (d.transforms[i].apply(cc) - cp).norm());
    }
    CHECK(worst_r <= 1e-9);
    CHECK(worst_centroid <= 1e-12);
  }
}

TEST_CASE("fits are left-equivariant under a global rotation") {
  Rng rng(4);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  const PosedBody p = pose_body(m, {}, random_pose(8, rng));
  const Mat3 r0 = rng.rotation();
  PosedBody rp = p;
  rp.vertices = (p.vertices * r0.transpose()).eval();
  compute_face_geometry(rp.vertices, *rp.faces, rp);
  const FaceTransformSet a = compute_pvd(c, p), b = compute_pvd(c, rp);
  for (int i = 0; i < a.size(); ++i) {
    CHECK((b.transforms[i].rotation - r0 * a.transforms[i].rotation).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("degenerate faces fall back to identity rotation and centroid translation") {
  const Vec3 c[3] = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  const Vec3 p[3] = {Vec3(1, 1, 1), Vec3(2, 1, 1), Vec3(3, 1, 1)};
  RigidTransform t;
  CHECK_FALSE(fit_face_transform(c, Vec3::UnitZ(), p, Vec3::UnitZ(), &t));
  CHECK(t.rotation == Mat3::Identity());
  CHECK((t.translation - (Vec3(2, 1, 1) - Vec3(1.0 / 3, 1.0 / 3, 0))).norm() <= 1e-12);
}

TEST_CASE("posing moves human Gaussians and leaves background alone") {
  Rng rng(5);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  const GaussianCloud cloud = attached_cloud(c, rng, 200, 20);

  SUBCASE("identity transforms are a no-op") {
    const GaussianCloud out = pose_gaussians(cloud, FaceTransformSet::identity(m.face_count()));
    CHECK(out.centers == cloud.centers);
    CHECK(out.rotations == cloud.rotations);
  }
  SUBCASE("Gaussian at a face centroid lands on the posed centroid") {
    GaussianCloud at(1);
    at.resize(c.face_count());
    at.centers = c.face_centers;
    at.rotations.rowwise() = quat_identity().transpose();
    for (int i = 0; i < at.size(); ++i) at.parents[i] = ParentId::face(i);
    const PosedBody p = pose_body(m, {}, random_pose(8, rng));
    const GaussianCloud out = pose_gaussians(at, compute_pvd(c, p));
    CHECK((out.centers - p.face_centers).rowwise().norm().maxCoeff() <= 1e-9);
  }
  SUBCASE("global rigid posing preserves distances; other attributes untouched") {
    const Mat3 r0 = rng.rotation();
    FaceTransformSet d = FaceTransformSet::identity(m.face_count());
    for (auto& t : d.transforms) t = {r0, Vec3(0.3, -0.2, 1.0)};
    const GaussianCloud out = pose_gaussians(cloud, d);
    const auto h = cloud.human_indices();
    double worst = 0.0;
    for (std::size_t a = 0; a < h.size(); a += 7) {
      for (std::size_t b = a + 1; b < h.size(); b += 5) {
        const double d0 = (cloud.centers.row(h[a]) - cloud.centers.row(h[b])).norm();
        const double d1 = (out.centers.row(h[a]) - out.centers.row(h[b])).norm();
        worst = std::max(worst, std::abs(d0 - d1));
      }
    }
    CHECK(worst <= 1e-9);
    CHECK(out.log_scales == cloud.log_scales);
    CHECK(out.opacity_logits == cloud.opacity_logits);
    CHECK(out.sh == cloud.sh);
    for (int i : cloud.background_indices()) {
      CHECK(out.centers.row(i) == cloud.centers.row(i));
      CHECK(out.rotations.row(i) == cloud.rotations.row(i));
    }
    for (int i : h) {
      const Vec4 expected = quat_multiply(quat_from_matrix(r0), cloud.rotations.row(i).transpose());
      CHECK(std::abs(expected.dot(out.rotations.row(i).transpose())) >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("un-posing inverts posing and residuals") {
  Rng rng(6);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);
  const GaussianCloud cloud = attached_cloud(c, rng, 300, 30);
  const int h = cloud.human_count();

  SUBCASE("identity residuals") {
    const FaceTransformSet d = compute_pvd(c, pose_body(m, {}, random_pose(8, rng)));
    const std::vector<ResidualTransform> none(h);
    const GaussianCloud back = unpose_gaussians(pose_gaussians(cloud, d), d, none);
    CHECK((back.centers - cloud.centers).rowwise().norm().maxCoeff() <= 1e-7);
    for (int i = 0; i < cloud.size(); ++i) {
      CHECK(std::abs(back.rotations.row(i).dot(cloud.rotations.row(i))) >= 1.0 - 1e-9);
    }
  }
  SUBCASE("random residuals") {
    for (int trial = 0; trial < 10; ++trial) {
      const FaceTransformSet d = compute_pvd(c, pose_body(m, {}, random_pose(8, rng)));
      const auto r = random_residuals(rng, h);
      const GaussianCloud posed = apply_residuals(pose_gaussians(cloud, d), r);
      const GaussianCloud back = unpose_gaussians(posed, d, r);
      CHECK((back.centers - cloud.centers).rowwise().norm().maxCoeff() <= 1e-6);
      for (int i = 0; i < cloud.size(); ++i) {
        CHECK(std::abs(back.rotations.row(i).dot(cloud.rotations.row(i))) >= 1.0 - 1e-9);
      }
    }
  }
  SUBCASE("identity everything") {
    const GaussianCloud back = unpose_gaussians(cloud, FaceTransformSet::identity(m.face_count()),
                                                std::vector<ResidualTransform>(h));
    CHECK(back.centers == cloud.centers);
    for (int i = 0; i < cloud.size(); ++i) {
      CHECK((back.rotations.row(i) - cloud.rotations.row(i)).norm() <= 1e-15);
    }
  }
  SUBCASE("residual count must match") {
    CHECK_THROWS(unpose_gaussians(cloud, FaceTransformSet::identity(m.face_count()),
                                  std::vector<ResidualTransform>(h + 1)));
  }
}

TEST_CASE("residual transforms compose with their inverses") {
  Rng rng(7);
  const BodyModel m = make_synthetic_body(4, 8);
  const PosedBody c = canonical_of(m);
  const GaussianCloud cloud = attached_cloud(c, rng, 100, 0);
  const auto r = random_residuals(rng, 100);
  const GaussianCloud back = unpose_gaussians(apply_residuals(cloud, r), FaceTransformSet::identity(m.face_count()), r);
  CHECK((back.centers - cloud.centers).rowwise().norm().maxCoeff() <= 1e-7);
}

TEST_CASE("camera-relative directions") {
  Rng rng(8);
  GaussianCloud c(0);
  c.resize(12);
  c.centers.setZero();
  for (int i = 1; i < 11; ++i) c.centers.row(i) = rng.vec3(-2, 2).transpose();
  c.centers.row(11) = Vec3(0, 0, 1).transpose();  // coincides with the camera center
  const Vec3 cam(0, 0, 1);
  const DirectionField f = relative_sh_directions(c, cam);
  CHECK((Vec3(f.directions.row(0).transpose()) - Vec3(0, 0, 1)).norm() <= 1e-15);
  for (int i = 1; i < 11; ++i) {
    const Vec3 p = c.centers.row(i).transpose();
    const double dx = cam.x() - p.x(), dy = cam.y() - p.y(), dz = cam.z() - p.z();
    const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
    CHECK((Vec3(f.directions.row(i).transpose()) - Vec3(dx / len, dy / len, dz / len)).norm() <= 1e-12);
  }
  CHECK(((f.directions.rowwise().norm().array() - 1.0).abs() <= 1e-12).all());
  REQUIRE(f.flagged.size() == 1);
  CHECK(f.flagged[0] == 11);
  CHECK(f.directions.row(11) == Vec3(0, 0, 1).transpose());
}

TEST_CASE("normal-corrected directions") {
  Rng rng(9);
  GaussianCloud c(0);
  c.resize(1);
  c.parents[0] = ParentId::face(0);
  c.canonical_normals.row(0) = Vec3::UnitX().transpose();
  FaceTransformSet d = FaceTransformSet::identity(1);

  CHECK((corrected_sh_directions(c, d, std::vector<ResidualTransform>(1)).row(0) - c.canonical_normals.row(0)).norm() ==
        0.0);
  d.transforms[0].rotation = Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()).toRotationMatrix();
  const Points3 y = corrected_sh_directions(c, d, std::vector<ResidualTransform>(1));
  CHECK((Vec3(y.row(0).transpose()) - Vec3::UnitY()).norm() <= 1e-9);

  const BodyModel m = make_synthetic_body(8, 8);
  const PosedBody can = canonical_of(m);
  const GaussianCloud cloud = attached_cloud(can, rng, 200, 10);
  const FaceTransformSet pd = compute_pvd(can, pose_body(m, {}, random_pose(8, rng)));
  const Points3 dirs = corrected_sh_directions(cloud, pd, random_residuals(rng, 200));
  CHECK(dirs.rows() == 200);
  CHECK(((dirs.rowwise().norm().array() - 1.0).abs() <= 1e-6).all());
}

TEST_CASE("point to triangle distance agrees with dense sampling") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a = rng.vec3(-1, 1), b = rng.vec3(-1, 1), c = rng.vec3(-1, 1), p = rng.vec3(-2, 2);
    const double d = point_triangle_distance(p, a, b, c);
    const double sampled = sampled_triangle_distance(p, a, b, c, 120);
    const double spacing = std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()}) / 120.0;
    CHECK(d <= sampled + 1e-12);
    CHECK(sampled - d <= spacing);
  }
  CHECK(point_triangle_distance(Vec3(0.2, 0.2, 0.5), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)) ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("parent reassignment") {
  Rng rng(11);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody c = canonical_of(m);

  SUBCASE("a Gaussian on a centroid keeps that face") {
    // Overlapping capsules put some centroids on two coincident surfaces; only
    // centroids with a unique nearest face are meaningful here.
    const FaceIndices& f = *c.faces;
    GaussianCloud g(0);
    g.resize(c.face_count());
    g.centers = c.face_centers;
    for (int i = 0; i < g.size(); ++i) g.parents[i] = ParentId::face((i * 7 + 3) % g.size());
    const GaussianCloud out = reassign_parents(g, c, 0.10);
    int checked = 0;
    for (int i = 0; i < g.size(); ++i) {
      double second = 1e9;
      for (int k = 0; k < f.rows(); ++k) {
        if (k == i) continue;
        second = std::min(second, point_triangle_distance(g.centers.row(i).transpose(), c.vertices.row(f(k, 0)).transpose(),
                                                          c.vertices.row(f(k, 1)).transpose(),
                                                          c.vertices.row(f(k, 2)).transpose()));
      }
      if (second < 1e-9) continue;
      ++checked;
      CHECK(out.parents[i] == ParentId::face(i));
    }
    CHECK(checked > g.size() * 9 / 10);
  }
  SUBCASE("0.15 m off the surface goes to the background") {
    GaussianCloud g(0);
    g.resize(1);
    const int face = 17;
    g.centers.row(0) = c.face_centers.row(face) + 0.15 * c.face_normals.row(face);
    g.parents[0] = ParentId::face(face);
    double nearest = 1e9;
    for (int i = 0; i < c.face_count(); ++i) {
      const FaceIndices& f = *c.faces;
      nearest = std::min(nearest, point_triangle_distance(g.centers.row(0).transpose(), c.vertices.row(f(i, 0)).transpose(),
                                                          c.vertices.row(f(i, 1)).transpose(),
                                                          c.vertices.row(f(i, 2)).transpose()));
    }
    REQUIRE(nearest > 0.10);
    CHECK(reassign_parents(g, c, 0.10).parents[0].is_background());
  }
  SUBCASE("500 random Gaussians match the exhaustive scan") {
    GaussianCloud g(0);
    g.resize(500);
    Vec3 lo = c.vertices.colwise().minCoeff().transpose(), hi = c.vertices.colwise().maxCoeff().transpose();
    for (int i = 0; i < 500; ++i) {
      for (int k = 0; k < 3; ++k) g.centers(i, k) = rng.uniform(lo[k] - 0.2, hi[k] + 0.2);
      g.parents[i] = i % 10 == 0 ? ParentId::background() : ParentId::face(rng.integer(0, c.face_count() - 1));
    }
    const GaussianCloud out = reassign_parents(g, c, 0.10);
    int human = 0, demoted = 0;
    for (int i = 0; i < 500; ++i) {
      const ParentId expected =
          g.parents[i].is_background() ? ParentId::background() : brute_force_parent(g.centers.row(i).transpose(), c, 0.10);
      CHECK(out.parents[i] == expected);
      human += expected.is_face();
      demoted += g.parents[i].is_face() && expected.is_background();
    }
    CHECK(human > 0);
    CHECK(demoted > 0);
  }
}

TEST_CASE("background filtering") {
  GaussianCloud g(0);
  g.resize(15);
  for (int i = 0; i < 15; ++i) {
    g.parents[i] = i % 3 == 2 ? ParentId::background() : ParentId::face(i);
    g.centers(i, 0) = i;
  }
  const GaussianCloud f = filter_background(g);
  REQUIRE(f.size() == 10);
  for (int i = 1; i < f.size(); ++i) CHECK(f.centers(i, 0) > f.centers(i - 1, 0));
  const GaussianCloud ff = filter_background(f);
  CHECK(ff.centers == f.centers);
  CHECK(ff.parents == f.parents);

  GaussianCloud bg(0);
  bg.resize(4);
  CHECK(filter_background(bg).empty());
}
