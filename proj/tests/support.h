#pragma once

// Shared generators and reference implementations for the test binaries.

#include "gavatar/body_model.h"
#include "gavatar/deformation.h"
#include "gavatar/gaussian_cloud.h"
#include "gavatar/rasterizer.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace gtest {

using namespace gavatar;

inline constexpr double kPi = 3.14159265358979323846;

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(engine); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }

  Vec3 vec3(double lo, double hi) { return Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)); }
  Vec3 unit() {
    Vec3 v(normal(), normal(), normal());
    while (v.norm() < 1e-6) v = Vec3(normal(), normal(), normal());
    return v.normalized();
  }
  Vec4 quat() {
    Vec4 q(normal(), normal(), normal(), normal());
    return q.normalized();
  }
  Mat3 rotation() { return Eigen::Quaterniond(Eigen::AngleAxisd(uniform(0.0, kPi), unit())).toRotationMatrix(); }
};

inline PoseParams random_pose(int joints, Rng& rng, double amplitude = 0.8, double translation = 0.3) {
  PoseParams p = PoseParams::canonical(joints);
  for (int j = 0; j < joints; ++j) p.rotations.row(j) = (rng.unit() * rng.uniform(0.0, amplitude)).transpose();
  p.translation = rng.vec3(-translation, translation);
  return p;
}

// Homogeneous-matrix LBS walking the parent chain recursively.
inline Points3 lbs_reference(const BodyModel& model, const ShapeParams& shape, const PoseParams& pose) {
  const int v_count = model.vertex_count(), j_count = model.joint_count();
  Points3 shaped = model.template_vertices;
  for (int b = 0; b < shape.betas.size(); ++b) {
    for (int v = 0; v < v_count; ++v) {
      for (int k = 0; k < 3; ++k) shaped(v, k) += shape.betas[b] * model.shape_blendshapes(3 * v + k, b);
    }
  }
  std::vector<Vec3> rest(j_count, Vec3::Zero());
  for (int j = 0; j < j_count; ++j) {
    for (int v = 0; v < v_count; ++v) rest[j] += model.joint_regressor(j, v) * Vec3(shaped.row(v).transpose());
  }
  std::vector<Eigen::Matrix4d> global(j_count);
  std::vector<bool> done(j_count, false);
  std::function<Eigen::Matrix4d(int)> world = [&](int j) -> Eigen::Matrix4d {
    if (done[j]) return global[j];
    const Vec3 aa = pose.rotations.row(j).transpose();
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    if (aa.norm() > 0.0) local.topLeftCorner<3, 3>() = Eigen::AngleAxisd(aa.norm(), aa.normalized()).toRotationMatrix();
    const int p = model.kinematic_parents[j];
    local.topRightCorner<3, 1>() = p < 0 ? rest[j] : Vec3(rest[j] - rest[p]);
    global[j] = p < 0 ? local : Eigen::Matrix4d(world(p) * local);
    done[j] = true;
    return global[j];
  };
  Points3 out(v_count, 3);
  for (int v = 0; v < v_count; ++v) {
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (int j = 0; j < j_count; ++j) {
      Eigen::Matrix4d unrest = Eigen::Matrix4d::Identity();
      unrest.topRightCorner<3, 1>() = -rest[j];
      const Eigen::Vector4d h(shaped(v, 0), shaped(v, 1), shaped(v, 2), 1.0);
      acc += model.skinning_weights(v, j) * (world(j) * unrest * h);
    }
    out.row(v) = (acc.head<3>() + pose.translation).transpose();
  }
  return out;
}

// O(N·F) scan; strict comparison keeps the lowest face index on ties.
inline ParentId brute_force_parent(const Vec3& p, const PosedBody& canonical, double tau) {
  const FaceIndices& f = *canonical.faces;
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < f.rows(); ++i) {
    const double d = point_triangle_distance(p, canonical.vertices.row(f(i, 0)).transpose(),
                                             canonical.vertices.row(f(i, 1)).transpose(),
                                             canonical.vertices.row(f(i, 2)).transpose());
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best_d > tau ? ParentId::background() : ParentId::face(best);
}

// Minimum over a dense barycentric sampling; an upper bound converging to the true distance.
inline double sampled_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, int steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps - i; ++j) {
      const double u = double(i) / steps, v = double(j) / steps;
      best = std::min(best, (p - (a + u * (b - a) + v * (c - a))).norm());
    }
  }
  return best;
}

// Per-pixel compositing over all visible Gaussians in global (depth, index) order.
inline RenderOutput brute_force_render(const ProjectedGaussians& pg, int width, int height, const RasterSettings& s) {
  std::vector<int> order;
  for (int i = 0; i < pg.count; ++i) {
    if (pg.visible(i)) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pg.depths(a) < pg.depths(b); });
  RenderOutput out;
  out.rgb = Image(width, height, 3);
  out.alpha = Image(width, height, 1);
  out.depth = Image(width, height, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double t = 1.0, depth = 0.0;
      Vec3 color = Vec3::Zero();
      for (int i : order) {
        const double dx = x + 0.5 - pg.means(i, 0), dy = y + 0.5 - pg.means(i, 1);
        Mat2 cov;
        cov << pg.covariances(i, 0), pg.covariances(i, 1), pg.covariances(i, 1), pg.covariances(i, 2);
        const Vec2 d(dx, dy);
        const double g = std::exp(-0.5 * d.dot(cov.inverse() * d));
        const double a = std::min(s.alpha_cap, pg.opacities(i) * g);
        if (a < s.min_alpha) continue;
        color += a * t * Vec3(pg.colors.row(i).transpose());
        depth += a * t * pg.depths(i);
        t *= 1.0 - a;
        if (t < s.min_transmittance) break;
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = color[c] + t * s.background[c];
      out.alpha.at(x, y) = 1.0 - t;
      out.depth.at(x, y) = depth / std::max(1.0 - t, s.depth_epsilon);
    }
  }
  return out;
}

// Random small scene in front of a camera at the origin looking down +z.
struct RandomScene {
  GaussianCloud cloud;
  Points3 directions;
  Camera camera;
};

inline RandomScene random_scene(Rng& rng, int count, int width, int height, int sh_degree = -1) {
  RandomScene sc;
  const int degree = sh_degree < 0 ? rng.integer(0, 3) : sh_degree;
  sc.cloud = GaussianCloud(degree);
  sc.cloud.resize(count);
  sc.camera.width = width;
  sc.camera.height = height;
  sc.camera.fx = sc.camera.fy = 1.2 * width;
  sc.camera.cx = 0.5 * width + rng.uniform(-1.0, 1.0);
  sc.camera.cy = 0.5 * height + rng.uniform(-1.0, 1.0);
  sc.directions.resize(count, 3);
  for (int i = 0; i < count; ++i) {
    const double z = rng.uniform(2.0, 4.0);
    sc.cloud.centers.row(i) = Vec3(rng.uniform(-0.45, 0.45) * z, rng.uniform(-0.45, 0.45) * z, z).transpose();
    sc.cloud.rotations.row(i) = rng.quat().transpose();
    sc.cloud.log_scales.row(i) = rng.vec3(std::log(0.03), std::log(0.25)).transpose();
    sc.cloud.opacity_logits(i) = rng.uniform(-2.5, 1.5);
    for (int k = 0; k < sc.cloud.sh_count(); ++k) {
      for (int c = 0; c < 3; ++c) sc.cloud.sh(i, 3 * k + c) = rng.uniform(-0.5, 0.5) / (1.0 + k);
    }
    sc.cloud.parents[i] = ParentId::background();
    sc.directions.row(i) = rng.unit().transpose();
  }
  return sc;
}

// Central difference of f with respect to *x.
inline double central_difference(double* x, double h, const std::function<double()>& f) {
  const double saved = *x;
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * h);
}

inline bool gradient_close(double analytic, double numeric, double rel = 1e-2, double abs = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

// For piecewise-smooth losses (alpha skip threshold, early termination, color clamp):
// a step straddling a jump spoils the central difference but leaves the one-sided
// difference on the smooth side intact. A wrong gradient disagrees with all three.
struct DifferenceCheck {
  double central = 0.0, forward = 0.0, backward = 0.0;
  bool matches(double analytic, double rel = 1e-2, double abs = 1e-6) const {
    return gradient_close(analytic, central, rel, abs) || gradient_close(analytic, forward, rel, abs) ||
           gradient_close(analytic, backward, rel, abs);
  }
};

inline DifferenceCheck piecewise_difference(double* x, double h, const std::function<double()>& f) {
  const double saved = *x;
  const double f0 = f();
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return {(fp - fm) / (2.0 * h), (fp - f0) / h, (f0 - fm) / h};
}

inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gavatar_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

} // namespace gtest
