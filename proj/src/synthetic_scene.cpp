#include "gavatar/dataset.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

namespace gavatar {

namespace fs = std::filesystem;

namespace {

Vec3 body_color(const Vec3& p) {
  const Vec3 c(0.55 + 0.35 * std::sin(4.0 * p.y() + 1.0), 0.45 + 0.3 * std::sin(5.0 * p.x() + 3.0 * p.z() + 2.0),
               0.5 + 0.35 * std::cos(3.0 * p.y() - 4.0 * p.x()));
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 backdrop_color(const Vec3& unit) {
  return Vec3(0.35 + 0.15 * std::sin(2.0 * unit.x() + 1.0), 0.3 + 0.15 * std::cos(3.0 * unit.y()),
              0.4 + 0.2 * std::sin(2.0 * unit.z() + unit.y()));
}

// Point where the ray from `origin` along unit `dir` leaves the sphere (center, radius).
Vec3 sphere_exit(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double t = -b + std::sqrt(std::max(b * b - c, 0.0));
  return origin + t * dir;
}

Vec3 bounding_center(const Points3& v) {
  return 0.5 * (v.colwise().minCoeff() + v.colwise().maxCoeff()).transpose();
}

} // namespace

ReferenceRender render_reference(const BodyModel& body, const PosedBody& posed, const Camera& cam,
                                 double backdrop_radius, const Vec3& backdrop_center) {
  constexpr int kSub = 2;
  const int sw = cam.width * kSub, sh = cam.height * kSub;
  std::vector<double> zbuf(static_cast<std::size_t>(sw) * sh, std::numeric_limits<double>::infinity());
  std::vector<Vec3> cbuf(zbuf.size(), Vec3::Zero());

  const int nv = static_cast<int>(posed.vertices.rows());
  std::vector<Vec3> screen(nv);  // (sx, sy, z) in sample units
  std::vector<Vec3> colors(nv);
  for (int i = 0; i < nv; ++i) {
    const Vec3 p = cam.world_to_camera.apply(posed.vertices.row(i).transpose());
    screen[i] = Vec3((cam.fx * p.x() / p.z() + cam.cx) * kSub, (cam.fy * p.y() / p.z() + cam.cy) * kSub, p.z());
    colors[i] = body_color(body.template_vertices.row(i).transpose());
  }
  const FaceIndices& faces = *posed.faces;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
    const Vec3 &pa = screen[a], &pb = screen[b], &pc = screen[c];
    if (pa.z() <= cam.near || pb.z() <= cam.near || pc.z() <= cam.near) continue;
    const double area = (pb.x() - pa.x()) * (pc.y() - pa.y()) - (pb.y() - pa.y()) * (pc.x() - pa.x());
    if (std::abs(area) < 1e-14) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({pa.x(), pb.x(), pc.x()}) - 0.5)));
    const int x1 = std::min(sw - 1, static_cast<int>(std::ceil(std::max({pa.x(), pb.x(), pc.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({pa.y(), pb.y(), pc.y()}) - 0.5)));
    const int y1 = std::min(sh - 1, static_cast<int>(std::ceil(std::max({pa.y(), pb.y(), pc.y()}) - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double w0 = ((pb.x() - px) * (pc.y() - py) - (pb.y() - py) * (pc.x() - px)) / area;
        const double w1 = ((pc.x() - px) * (pa.y() - py) - (pc.y() - py) * (pa.x() - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double inv_z = w0 / pa.z() + w1 / pb.z() + w2 / pc.z();
        const double z = 1.0 / inv_z;
        const std::size_t s = static_cast<std::size_t>(y) * sw + x;
        if (z >= zbuf[s]) continue;
        zbuf[s] = z;
        cbuf[s] = (w0 / pa.z() * colors[a] + w1 / pb.z() * colors[b] + w2 / pc.z() * colors[c]) * z;
      }
    }
  }

  ReferenceRender out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1)};
  const Vec3 eye = cam.center();
  const Mat3 cam_to_world = cam.world_to_camera.rotation.transpose();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec3 sum = Vec3::Zero();
      int covered = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const std::size_t s = static_cast<std::size_t>(y * kSub + sy) * sw + (x * kSub + sx);
          if (std::isfinite(zbuf[s])) {
            sum += cbuf[s];
            ++covered;
          } else {
            const double u = (x + (sx + 0.5) / kSub - cam.cx) / cam.fx;
            const double v = (y + (sy + 0.5) / kSub - cam.cy) / cam.fy;
            const Vec3 dir = (cam_to_world * Vec3(u, v, 1.0)).normalized();
            const Vec3 hit = sphere_exit(eye, dir, backdrop_center, backdrop_radius);
            sum += backdrop_color((hit - backdrop_center).normalized());
          }
        }
      }
      sum /= kSub * kSub;
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = sum(c);
      out.mask.at(x, y) = covered * 2 >= kSub * kSub ? 1.0 : 0.0;
    }
  }
  return out;
}

SyntheticScene generate_synthetic_scene(const BodyModel& body, int camera_count, int frame_count, std::uint64_t seed,
                                        const std::string& out_dir, const SyntheticSceneOptions& opt) {
  if (camera_count <= 0 || frame_count <= 0) {
    throw std::invalid_argument("generate_synthetic_scene: need at least one camera and one frame");
  }
  body.validate();
  SyntheticScene scene;
  const Vec3 center = bounding_center(body.template_vertices);
  double bound = 0.0;
  for (Eigen::Index i = 0; i < body.template_vertices.rows(); ++i) {
    bound = std::max(bound, (Vec3(body.template_vertices.row(i).transpose()) - center).norm());
  }
  scene.ring_center = center;
  scene.backdrop_radius = opt.backdrop_radius > 0.0 ? opt.backdrop_radius : 2.0 * opt.ring_radius;
  const double focal = opt.fill * 0.5 * opt.width * opt.ring_radius / bound;
  for (int k = 0; k < camera_count; ++k) {
    const double a = 2.0 * std::numbers::pi * k / camera_count;
    const Vec3 eye = center + opt.ring_radius * Vec3(std::sin(a), 0.0, std::cos(a));
    char id[16];
    std::snprintf(id, sizeof id, "cam%02d", k);
    scene.cameras.push_back({id, look_at_camera(eye, center, Vec3::UnitY(), opt.width, opt.height, focal, focal)});
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> freq(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const int joints = body.joint_count();
  struct Wave {
    double amp, omega, phi;
  };
  std::vector<Wave> waves(static_cast<std::size_t>(joints) * 3 + 3);
  for (std::size_t i = 0; i < waves.size(); ++i) {
    waves[i] = {unit(rng), freq(rng), phase(rng)};
  }
  for (int t = 0; t < frame_count; ++t) {
    const double s = 2.0 * std::numbers::pi * t / frame_count;
    PoseParams p = PoseParams::canonical(joints);
    for (int j = 0; j < joints; ++j) {
      for (int c = 0; c < 3; ++c) {
        const Wave& w = waves[3 * j + c];
        double amp = opt.pose_amplitude * w.amp;
        if (j == 0) amp *= (c == 1 ? 0.6 : 0.15);  // root mostly turns about the vertical
        p.rotations(j, c) = amp * std::sin(w.omega * s + w.phi);
      }
    }
    for (int c = 0; c < 3; ++c) {
      const Wave& w = waves[3 * joints + c];
      p.translation(c) = 0.03 * w.amp * std::sin(w.omega * s + w.phi);
    }
    scene.poses.emplace(t, std::move(p));
  }

  const fs::path root(out_dir);
  fs::create_directories(root);
  save_body_model(body, (root / "body.bin").string());
  write_cameras(scene.cameras, (root / "cameras.txt").string());
  write_poses(scene.poses, joints, (root / "poses.txt").string());
  write_shape(ShapeParams{}, (root / "shape.txt").string());
  const ShapeParams shape;
  for (const NamedCamera& nc : scene.cameras) {
    fs::create_directories(root / "images" / nc.id);
    fs::create_directories(root / "masks" / nc.id);
  }
  for (const auto& [t, pose] : scene.poses) {
    const PosedBody posed = pose_body(body, shape, pose);
    for (const NamedCamera& nc : scene.cameras) {
      const ReferenceRender r = render_reference(body, posed, nc.camera, scene.backdrop_radius, scene.ring_center);
      write_png(r.rgb, (root / "images" / nc.id / frame_file_name(t)).string());
      write_png(r.mask, (root / "masks" / nc.id / frame_file_name(t)).string());
    }
  }
  return scene;
}

} // namespace gavatar
