#include "doctest.h"
#include "support.h"

#include "gavatar/container.h"
#include "gavatar/rotation.h"

#include <filesystem>
#include <fstream>
#include <map>

using namespace gtest;

namespace {

double max_row_error(const Points3& a, const Points3& b) { return (a - b).rowwise().norm().maxCoeff(); }

} // namespace

TEST_CASE("synthetic body: weights form a partition of unity") {
  for (int joints : {2, 5, 8, 12}) {
    const BodyModel m = make_synthetic_body(joints, 8);
    CHECK(m.joint_count() == joints);
    CHECK(m.skinning_weights.minCoeff() >= 0.0);
    const Eigen::VectorXd sums = m.skinning_weights.rowwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK_NOTHROW(m.validate());
  }
}

TEST_CASE("synthetic body: vertex and face counts follow the capsule formula") {
  for (auto [joints, segments] : std::vector<std::pair<int, int>>{{8, 16}, {2, 8}, {3, 3}, {10, 7}}) {
    const BodyModel m = make_synthetic_body(joints, segments);
    const int k = std::max(2, segments / 2);
    CHECK(m.vertex_count() == joints * (segments * (k + 1) + 2));
    CHECK(m.face_count() == joints * 2 * segments * (k + 1));

    // Each capsule is a closed sphere-like surface: every edge is shared by two faces
    // and V - E + F = 2 per capsule.
    std::map<std::pair<int, int>, int> edges;
    const FaceIndices& f = *m.faces;
    for (int i = 0; i < f.rows(); ++i) {
      for (int e = 0; e < 3; ++e) {
        int a = f(i, e), b = f(i, (e + 1) % 3);
        if (a > b) std::swap(a, b);
        ++edges[{a, b}];
      }
    }
    bool all_shared = true;
    for (const auto& [edge, n] : edges) all_shared = all_shared && n == 2;
    CHECK(all_shared);
    CHECK(m.vertex_count() - static_cast<int>(edges.size()) + m.face_count() == 2 * joints);
  }
}

TEST_CASE("synthetic body is deterministic") {
  const BodyModel a = make_synthetic_body(8, 12);
  const BodyModel b = make_synthetic_body(8, 12);
  CHECK(a.template_vertices == b.template_vertices);
  CHECK(*a.faces == *b.faces);
  CHECK(a.skinning_weights == b.skinning_weights);
  CHECK(a.joint_regressor == b.joint_regressor);
  CHECK(a.kinematic_parents == b.kinematic_parents);
  CHECK(a.shape_blendshapes == b.shape_blendshapes);
}

TEST_CASE("synthetic body rejects bad arguments") {
  CHECK_THROWS(make_synthetic_body(1, 8));
  CHECK_THROWS(make_synthetic_body(4, 2));
}

TEST_CASE("body model file round trip") {
  const std::string dir = temp_dir("body_io");
  const BodyModel m = make_synthetic_body(8, 10);
  const std::string path = dir + "/body.bin";
  save_body_model(m, path);
  const BodyModel r = load_body_model(path);
  CHECK(r.joint_count() == 8);
  CHECK(r.template_vertices == m.template_vertices);
  CHECK(*r.faces == *m.faces);
  CHECK(r.skinning_weights == m.skinning_weights);
  CHECK(r.joint_regressor == m.joint_regressor);
  CHECK(r.kinematic_parents == m.kinematic_parents);
  CHECK(r.shape_blendshapes == m.shape_blendshapes);
}

TEST_CASE("body model loading rejects invalid files") {
  const std::string dir = temp_dir("body_bad");
  const BodyModel m = make_synthetic_body(2, 8);

  SUBCASE("weights row summing to 0.8") {
    ArrayContainer c;
    body_model_to_container(m, c, "");
    RowMatrix w = m.skinning_weights;
    w.row(3) *= 0.8;
    c.put_f64("skinning_weights", {static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())},
              {w.data(), static_cast<std::size_t>(w.size())});
    c.write(dir + "/w.bin", kBodyModelMagic);
    try {
      load_body_model(dir + "/w.bin");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("skinning_weights") != std::string::npos);
    }
  }
  SUBCASE("truncated file") {
    save_body_model(m, dir + "/full.bin");
    const auto size = std::filesystem::file_size(dir + "/full.bin");
    std::filesystem::copy_file(dir + "/full.bin", dir + "/cut.bin");
    std::filesystem::resize_file(dir + "/cut.bin", size / 2);
    CHECK_THROWS_AS(load_body_model(dir + "/cut.bin"), FormatError);
  }
  SUBCASE("wrong magic") {
    std::ofstream(dir + "/magic.bin", std::ios::binary) << "NOTABODY and more bytes";
    CHECK_THROWS_AS(load_body_model(dir + "/magic.bin"), FormatError);
  }
  SUBCASE("face index out of range") {
    BodyModel bad = m;
    auto faces = std::make_shared<FaceIndices>(*m.faces);
    (*faces)(0, 1) = m.vertex_count();
    bad.faces = faces;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }
  SUBCASE("cyclic skeleton") {
    BodyModel bad = make_synthetic_body(3, 8);
    bad.kinematic_parents = {-1, 2, 1};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }
}

TEST_CASE("canonical pose leaves the shaped template in place") {
  const BodyModel m = make_synthetic_body(8, 10);
  ShapeParams shape;
  shape.betas = Eigen::Vector2d(0.7, -0.4);
  const PosedBody p = pose_body(m, shape, PoseParams::canonical(8));
  CHECK(max_row_error(p.vertices, shaped_template(m, shape)) <= 1e-12);
}

TEST_CASE("pose_body matches a straight-line skinning reference") {
  Rng rng(11);
  for (int joints : {2, 8}) {
    const BodyModel m = make_synthetic_body(joints, 10);
    for (int trial = 0; trial < 20; ++trial) {
      ShapeParams shape;
      shape.betas = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
      const PoseParams pose = random_pose(joints, rng);
      const PosedBody p = pose_body(m, shape, pose);
      CHECK(max_row_error(p.vertices, lbs_reference(m, shape, pose)) <= 1e-9);
    }
  }
}

TEST_CASE("root-only pose is a rigid motion of the canonical body") {
  Rng rng(5);
  const BodyModel m = make_synthetic_body(8, 10);
  const ShapeParams shape;
  const PosedBody rest = pose_body(m, shape, PoseParams::canonical(8));
  for (int trial = 0; trial < 10; ++trial) {
    PoseParams pose = PoseParams::canonical(8);
    pose.rotations.row(0) = (rng.unit() * rng.uniform(0.1, 3.0)).transpose();
    pose.translation = rng.vec3(-1, 1);
    const PosedBody p = pose_body(m, shape, pose);
    const Mat3 r = Eigen::AngleAxisd(pose.rotations.row(0).norm(), pose.rotations.row(0).normalized().transpose())
                       .toRotationMatrix();
    // The root rotates about its own rest position.
    const Vec3 root = rest.joints.row(0).transpose();
    Points3 expected = rest.vertices;
    for (int v = 0; v < expected.rows(); ++v) {
      expected.row(v) = (r * (Vec3(rest.vertices.row(v).transpose()) - root) + root + pose.translation).transpose();
    }
    CHECK(max_row_error(p.vertices, expected) <= 1e-9);
    Points3 expected_n = (rest.face_normals * r.transpose()).eval();
    CHECK(max_row_error(p.face_normals, expected_n) <= 1e-9);
  }
}

TEST_CASE("joints with identity chains stay at their rest positions") {
  Rng rng(9);
  const BodyModel m = make_synthetic_body(8, 10);
  const PosedBody rest = pose_body(m, {}, PoseParams::canonical(8));
  PoseParams pose = PoseParams::canonical(8);
  // Rotate only a leaf of the tree: every other joint keeps an identity chain.
  std::vector<int> children(8, 0);
  for (int j = 0; j < 8; ++j) {
    if (m.kinematic_parents[j] >= 0) ++children[m.kinematic_parents[j]];
  }
  int leaf = 7;
  while (children[leaf] != 0) --leaf;
  pose.rotations.row(leaf) = rng.unit().transpose();
  const PosedBody p = pose_body(m, {}, pose);
  for (int j = 0; j < 8; ++j) CHECK((p.joints.row(j) - rest.joints.row(j)).norm() <= 1e-12);
}

TEST_CASE("face frames stay orthonormal under random poses") {
  Rng rng(21);
  const BodyModel m = make_synthetic_body(8, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const PosedBody p = pose_body(m, {}, random_pose(8, rng, 2.5, 1.0));
    double worst_n = 0.0, worst_r = 0.0;
    for (int f = 0; f < p.face_count(); ++f) {
      worst_n = std::max(worst_n, std::abs(p.face_normals.row(f).norm() - 1.0));
      const Mat3& r = p.face_rotations[f];
      worst_r = std::max(worst_r, (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff());
      worst_r = std::max(worst_r, std::abs(r.determinant() - 1.0));
      worst_r = std::max(worst_r, (r.col(2) - p.face_normals.row(f).transpose()).norm());
    }
    CHECK(worst_n <= 1e-6);
    CHECK(worst_r <= 1e-6);
  }
}

TEST_CASE("face geometry matches centroids and cross products") {
  Rng rng(2);
  const BodyModel m = make_synthetic_body(2, 6);
  const PosedBody p = pose_body(m, {}, random_pose(2, rng));
  const FaceIndices& f = *m.faces;
  for (int i = 0; i < f.rows(); ++i) {
    const Vec3 a = p.vertices.row(f(i, 0)), b = p.vertices.row(f(i, 1)), c = p.vertices.row(f(i, 2));
    CHECK((Vec3(p.face_centers.row(i).transpose()) - (a + b + c) / 3.0).norm() <= 1e-12);
    CHECK((Vec3(p.face_normals.row(i).transpose()) - (b - a).cross(c - a).normalized()).norm() <= 1e-9);
    CHECK((p.face_rotations[i].col(0) - (b - a).normalized()).norm() <= 1e-9);
  }
}

TEST_CASE("degenerate faces are flagged and fall back to the supplied normal") {
  Points3 v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 2, 0, 0;
  FaceIndices f(2, 3);
  f << 0, 1, 2, 0, 1, 3;  // second face is collinear
  Points3 fallback(2, 3);
  fallback << 0, 0, 1, 0, 1, 0;
  PosedBody out;
  compute_face_geometry(v, f, out, &fallback);
  REQUIRE(out.degenerate_faces.size() == 1);
  CHECK(out.degenerate_faces[0] == 1);
  CHECK((Vec3(out.face_normals.row(1).transpose()) - Vec3(0, 1, 0)).norm() <= 1e-12);
  CHECK(is_rotation(out.face_rotations[1]));
}

TEST_CASE("pose_body rejects a pose of the wrong length") {
  const BodyModel m = make_synthetic_body(3, 6);
  CHECK_THROWS_AS(pose_body(m, {}, PoseParams::canonical(4)), ShapeError);
}
