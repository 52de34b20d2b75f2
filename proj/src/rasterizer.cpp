#include "gavatar/rasterizer.h"

#include "gavatar/parallel.h"
#include "gavatar/rotation.h"
#include "gavatar/sh.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace gavatar {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  if (!(near < far) || !(near > 0.0)) throw ValidationError("camera clip planes require 0 < near < far");
  if (!world_to_camera.is_valid()) throw ValidationError("camera transform is not a rigid transform");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double fx,
                      double fy) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.world_to_camera.rotation.row(0) = x.transpose();
  cam.world_to_camera.rotation.row(1) = y.transpose();
  cam.world_to_camera.rotation.row(2) = z.transpose();
  cam.world_to_camera.translation = -(cam.world_to_camera.rotation * eye);
  return cam;
}

std::vector<int> ProjectedGaussians::culled() const {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    if (cull[i] != CullReason::None) out.push_back(i);
  }
  return out;
}

namespace {

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

Mat3 world_covariance(const Vec4& q, const Vec3& log_scale, Mat3* rotation_out = nullptr, Mat3* m_out = nullptr) {
  const Mat3 r = quat_to_matrix(q);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  if (rotation_out) *rotation_out = r;
  if (m_out) *m_out = m;
  return m * m.transpose();
}

} // namespace

ProjectedGaussians project_gaussians(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                                     const RasterSettings& settings) {
  camera.validate();
  const int n = cloud.size();
  if (directions.rows() != n) {
    throw ShapeError("project_gaussians: directions must have one row per Gaussian");
  }
  const int k_count = cloud.sh_count();
  ProjectedGaussians out;
  out.count = n;
  out.means.setZero(n, 2);
  out.covariances.setZero(n, 3);
  out.conics.setZero(n, 3);
  out.depths.setZero(n);
  out.opacities.setZero(n);
  out.colors.setZero(n, 3);
  out.raw_colors.setZero(n, 3);
  out.radii.setZero(n);
  out.cull.assign(n, CullReason::None);
  const Mat3& w = camera.world_to_camera.rotation;
  const double guard_x = settings.guard_band * camera.width;
  const double guard_y = settings.guard_band * camera.height;

  parallel_for(0, n, [&](int lo, int hi) {
    std::array<double, 16> basis{};
    for (int i = lo; i < hi; ++i) {
      const Vec3 p = camera.world_to_camera.apply(cloud.centers.row(i).transpose());
      if (!(p.z() >= camera.near && p.z() <= camera.far)) {
        out.cull[i] = CullReason::Depth;
        continue;
      }
      const double mx = camera.fx * p.x() / p.z() + camera.cx;
      const double my = camera.fy * p.y() / p.z() + camera.cy;
      if (mx < -guard_x || mx > camera.width + guard_x || my < -guard_y || my > camera.height + guard_y) {
        out.cull[i] = CullReason::GuardBand;
        continue;
      }
      const double o = sigmoid(cloud.opacity_logits(i));
      if (o < settings.min_alpha) {
        out.cull[i] = CullReason::Transparent;
        continue;
      }
      const Mat3 sigma = world_covariance(cloud.rotations.row(i).transpose(), cloud.log_scales.row(i).transpose());
      const Eigen::Matrix<double, 2, 3> t = projection_jacobian(camera, p) * w;
      const Mat2 s2 = t * sigma * t.transpose();
      const double a = s2(0, 0) + settings.lowpass;
      const double b = 0.5 * (s2(0, 1) + s2(1, 0));
      const double c = s2(1, 1) + settings.lowpass;
      const double det = a * c - b * b;
      out.means(i, 0) = mx;
      out.means(i, 1) = my;
      out.covariances.row(i) << a, b, c;
      out.conics.row(i) << c / det, -b / det, a / det;
      out.depths(i) = p.z();
      out.opacities(i) = o;
      const double mid = 0.5 * (a + c);
      const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
      const double reach = 2.0 * std::log(o / settings.min_alpha);
      out.radii(i) = std::sqrt(lambda_max * std::max(reach, 0.0)) * (1.0 + 1e-9) + 1e-9;

      sh_basis(cloud.sh_degree, directions.row(i).transpose(), basis.data());
      for (int ch = 0; ch < 3; ++ch) {
        double v = 0.5;
        for (int k = 0; k < k_count; ++k) v += cloud.sh(i, 3 * k + ch) * basis[k];
        out.raw_colors(i, ch) = v;
        out.colors(i, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  });
  return out;
}

namespace {

struct PixelRange {
  int x0, x1, y0, y1;
  bool empty() const { return x0 > x1 || y0 > y1; }
};

// Axis-aligned box of the ellipse where alpha can reach min_alpha; tighter than
// the radius circle for elongated splats.
PixelRange pixel_range(const ProjectedGaussians& pg, int i, int width, int height, double min_alpha) {
  const double reach = std::max(2.0 * std::log(pg.opacities(i) / min_alpha), 0.0);
  const double rx = std::min(pg.radii(i), std::sqrt(reach * pg.covariances(i, 0)) * (1.0 + 1e-9) + 1e-9);
  const double ry = std::min(pg.radii(i), std::sqrt(reach * pg.covariances(i, 2)) * (1.0 + 1e-9) + 1e-9);
  const double mx = pg.means(i, 0), my = pg.means(i, 1);
  PixelRange pr;
  pr.x0 = std::max(0, static_cast<int>(std::ceil(mx - rx - 0.5)));
  pr.x1 = std::min(width - 1, static_cast<int>(std::floor(mx + rx - 0.5)));
  pr.y0 = std::max(0, static_cast<int>(std::ceil(my - ry - 0.5)));
  pr.y1 = std::min(height - 1, static_cast<int>(std::floor(my + ry - 0.5)));
  return pr;
}

// Tile-ordered copy of what the per-pixel loops touch.
struct Fragment {
  double mx, my, ca, cb, cc, opacity, depth;
  double color[3];
};

std::vector<Fragment> pack_fragments(const ProjectedGaussians& pg, const std::vector<int>& items) {
  std::vector<Fragment> frags(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    const int i = items[k];
    Fragment& f = frags[k];
    f.mx = pg.means(i, 0);
    f.my = pg.means(i, 1);
    f.ca = pg.conics(i, 0);
    f.cb = pg.conics(i, 1);
    f.cc = pg.conics(i, 2);
    f.opacity = pg.opacities(i);
    f.depth = pg.depths(i);
    for (int c = 0; c < 3; ++c) f.color[c] = pg.colors(i, c);
  }
  return frags;
}

inline double fragment_power(const Fragment& f, double dx, double dy) {
  return -0.5 * (f.ca * dx * dx + 2.0 * f.cb * dx * dy + f.cc * dy * dy);
}


} // namespace

RenderOutput rasterize_forward(const ProjectedGaussians& pg, int width, int height, const RasterSettings& settings) {
  if (width <= 0 || height <= 0 || settings.tile_size <= 0) {
    throw std::invalid_argument("rasterize_forward: image and tile sizes must be positive");
  }
  RenderOutput out;
  RasterCache& cache = out.cache;
  cache.width = width;
  cache.height = height;
  cache.tile_size = settings.tile_size;
  cache.tiles_x = (width + settings.tile_size - 1) / settings.tile_size;
  cache.tiles_y = (height + settings.tile_size - 1) / settings.tile_size;
  const int tile_count = cache.tiles_x * cache.tiles_y;
  const int ts = settings.tile_size;

  std::vector<int> order;
  order.reserve(pg.count);
  for (int i = 0; i < pg.count; ++i) {
    if (pg.visible(i)) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pg.depths(a) != pg.depths(b)) return pg.depths(a) < pg.depths(b);
    return a < b;
  });

  // Two-pass CSR binning; visiting in depth order leaves each tile list sorted.
  std::vector<int> counts(tile_count + 1, 0);
  std::vector<PixelRange> ranges(pg.count);
  for (int i : order) {
    ranges[i] = pixel_range(pg, i, width, height, settings.min_alpha);
    const PixelRange& pr = ranges[i];
    if (pr.empty()) continue;
    for (int ty = pr.y0 / ts; ty <= pr.y1 / ts; ++ty) {
      for (int tx = pr.x0 / ts; tx <= pr.x1 / ts; ++tx) ++counts[ty * cache.tiles_x + tx + 1];
    }
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  cache.tile_offsets = counts;
  cache.tile_items.assign(counts.back(), -1);
  std::vector<int> fill(counts.begin(), counts.end() - 1);
  for (int i : order) {
    const PixelRange& pr = ranges[i];
    if (pr.empty()) continue;
    for (int ty = pr.y0 / ts; ty <= pr.y1 / ts; ++ty) {
      for (int tx = pr.x0 / ts; tx <= pr.x1 / ts; ++tx) cache.tile_items[fill[ty * cache.tiles_x + tx]++] = i;
    }
  }

  out.rgb = Image(width, height, 3);
  out.alpha = Image(width, height, 1);
  out.depth = Image(width, height, 1);
  cache.final_transmittance.assign(static_cast<std::size_t>(width) * height, 1.0);
  cache.consumed.assign(static_cast<std::size_t>(width) * height, 0);
  const std::vector<Fragment> frags = pack_fragments(pg, cache.tile_items);

  parallel_for(
      0, tile_count,
      [&](int lo, int hi) {
        for (int tile = lo; tile < hi; ++tile) {
          const int tx = tile % cache.tiles_x, ty = tile / cache.tiles_x;
          const int begin = cache.tile_offsets[tile], end = cache.tile_offsets[tile + 1];
          for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
              const double px = x + 0.5, py = y + 0.5;
              double t = 1.0;
              double color[3] = {0.0, 0.0, 0.0};
              double depth = 0.0;
              int consumed = 0;
              for (int k = begin; k < end; ++k) {
                const Fragment& f = frags[k];
                const double power = fragment_power(f, px - f.mx, py - f.my);
                const double alpha = std::min(settings.alpha_cap, f.opacity * std::exp(power));
                if (alpha < settings.min_alpha) continue;
                const double w = alpha * t;
                for (int c = 0; c < 3; ++c) color[c] += f.color[c] * w;
                depth += f.depth * w;
                t *= 1.0 - alpha;
                consumed = k - begin + 1;
                if (t < settings.min_transmittance) break;
              }
              const std::size_t pix = static_cast<std::size_t>(y) * width + x;
              cache.final_transmittance[pix] = t;
              cache.consumed[pix] = consumed;
              for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = color[c] + t * settings.background(c);
              const double a = 1.0 - t;
              out.alpha.at(x, y) = a;
              out.depth.at(x, y) = depth / std::max(a, settings.depth_epsilon);
            }
          }
        }
      },
      1);
  return out;
}

void CloudGradients::resize(int n, int sh_count) {
  centers.resize(n, 3);
  rotations.resize(n, 4);
  log_scales.resize(n, 3);
  opacity_logits.resize(n);
  sh.resize(n, 3 * sh_count);
  directions.resize(n, 3);
  mean2d_norm.resize(n);
  set_zero();
}

void CloudGradients::set_zero() {
  centers.setZero();
  rotations.setZero();
  log_scales.setZero();
  opacity_logits.setZero();
  sh.setZero();
  directions.setZero();
  mean2d_norm.setZero();
}

namespace {

// Per fragment-record partial gradient: mean (2), conic (3), opacity (1), color (3).
constexpr int kRecord = 9;

} // namespace

CloudGradients rasterize_backward(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                                  const RasterSettings& settings, const ProjectedGaussians& pg,
                                  const RenderOutput& output, const Image& grad_rgb) {
  const RasterCache& cache = output.cache;
  const int n = cloud.size();
  if (pg.count != n || directions.rows() != n) {
    throw ShapeError("rasterize_backward: cloud does not match the projected set");
  }
  if (grad_rgb.width != cache.width || grad_rgb.height != cache.height || grad_rgb.channels != 3 ||
      camera.width != cache.width || camera.height != cache.height ||
      cache.final_transmittance.size() != static_cast<std::size_t>(cache.width) * cache.height) {
    throw ShapeError("rasterize_backward: cache does not match the image gradient");
  }
  const int ts = cache.tile_size;
  const int width = cache.width, height = cache.height;
  const int tile_count = cache.tiles_x * cache.tiles_y;
  std::vector<double> partial(cache.tile_items.size() * kRecord, 0.0);
  const std::vector<Fragment> packed = pack_fragments(pg, cache.tile_items);

  parallel_for(
      0, tile_count,
      [&](int lo, int hi) {
        std::vector<int> frags;
        std::vector<double> alphas;
        std::vector<double> gausses;
        for (int tile = lo; tile < hi; ++tile) {
          const int tx = tile % cache.tiles_x, ty = tile / cache.tiles_x;
          const int begin = cache.tile_offsets[tile];
          for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
              const std::size_t pix = static_cast<std::size_t>(y) * width + x;
              const double g[3] = {grad_rgb.at(x, y, 0), grad_rgb.at(x, y, 1), grad_rgb.at(x, y, 2)};
              if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;
              const double px = x + 0.5, py = y + 0.5;
              frags.clear();
              alphas.clear();
              gausses.clear();
              for (int k = begin; k < begin + cache.consumed[pix]; ++k) {
                const Fragment& fr = packed[k];
                const double power = fragment_power(fr, px - fr.mx, py - fr.my);
                const double gauss = std::exp(power);
                const double alpha = std::min(settings.alpha_cap, fr.opacity * gauss);
                if (alpha < settings.min_alpha) continue;
                frags.push_back(k);
                alphas.push_back(alpha);
                gausses.push_back(gauss);
              }
              double t = cache.final_transmittance[pix];
              double after[3];
              for (int c = 0; c < 3; ++c) after[c] = t * settings.background(c);
              for (int f = static_cast<int>(frags.size()) - 1; f >= 0; --f) {
                const int k = frags[f];
                const Fragment& fr = packed[k];
                const double alpha = alphas[f];
                const double t_i = t / (1.0 - alpha);
                double* rec = &partial[static_cast<std::size_t>(k) * kRecord];
                double d_alpha = 0.0;
                for (int c = 0; c < 3; ++c) {
                  rec[6 + c] += alpha * t_i * g[c];
                  d_alpha += g[c] * (fr.color[c] * t_i - after[c] / (1.0 - alpha));
                  after[c] += fr.color[c] * alpha * t_i;
                }
                t = t_i;
                const double dx = px - fr.mx, dy = py - fr.my;
                const double gauss = gausses[f];
                if (fr.opacity * gauss > settings.alpha_cap) continue;
                rec[5] += gauss * d_alpha;
                const double d_power = fr.opacity * d_alpha * gauss;
                const double ca = fr.ca, cb = fr.cb, cc = fr.cc;
                rec[0] += d_power * (ca * dx + cb * dy);
                rec[1] += d_power * (cb * dx + cc * dy);
                rec[2] += -0.5 * dx * dx * d_power;
                rec[3] += -dx * dy * d_power;
                rec[4] += -0.5 * dy * dy * d_power;
              }
            }
          }
        }
      },
      1);

  // Fixed-order reduction keeps results independent of the worker count.
  Eigen::Matrix<double, Eigen::Dynamic, kRecord, Eigen::RowMajor> acc =
      Eigen::Matrix<double, Eigen::Dynamic, kRecord, Eigen::RowMajor>::Zero(n, kRecord);
  for (std::size_t k = 0; k < cache.tile_items.size(); ++k) {
    const int i = cache.tile_items[k];
    for (int r = 0; r < kRecord; ++r) acc(i, r) += partial[k * kRecord + r];
  }

  CloudGradients grads;
  const int k_count = cloud.sh_count();
  grads.resize(n, k_count);
  const Mat3& w = camera.world_to_camera.rotation;

  parallel_for(0, n, [&](int lo, int hi) {
    std::array<double, 16> basis{};
    std::array<Vec3, 16> basis_grad{};
    for (int i = lo; i < hi; ++i) {
      if (!pg.visible(i)) continue;
      const double gmx = acc(i, 0), gmy = acc(i, 1);
      grads.mean2d_norm(i) = std::hypot(gmx, gmy);

      // Color and SH.
      const Vec3 dir = directions.row(i).transpose();
      sh_basis_with_grad(cloud.sh_degree, dir, basis.data(), basis_grad.data());
      Vec3 d_dir = Vec3::Zero();
      for (int ch = 0; ch < 3; ++ch) {
        const double raw = pg.raw_colors(i, ch);
        if (raw < 0.0 || raw > 1.0) continue;
        const double gc = acc(i, 6 + ch);
        for (int k = 0; k < k_count; ++k) {
          grads.sh(i, 3 * k + ch) = gc * basis[k];
          d_dir += gc * cloud.sh(i, 3 * k + ch) * basis_grad[k];
        }
      }
      grads.directions.row(i) = d_dir.transpose();

      const double o = pg.opacities(i);
      grads.opacity_logits(i) = o * (1.0 - o) * acc(i, 5);

      // Conic -> 2D covariance -> 3D covariance and projection Jacobian.
      Mat2 conic;
      conic << pg.conics(i, 0), pg.conics(i, 1), pg.conics(i, 1), pg.conics(i, 2);
      Mat2 g_conic;
      g_conic << acc(i, 2), 0.5 * acc(i, 3), 0.5 * acc(i, 3), acc(i, 4);
      const Mat2 g_s2 = -conic * g_conic * conic;

      const Vec4 q = cloud.rotations.row(i).transpose();
      Mat3 r, m;
      const Mat3 sigma = world_covariance(q, cloud.log_scales.row(i).transpose(), &r, &m);
      const Vec3 p = camera.world_to_camera.apply(cloud.centers.row(i).transpose());
      const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(camera, p);
      const Eigen::Matrix<double, 2, 3> t = jac * w;
      const Mat3 g_sigma = t.transpose() * g_s2 * t;
      const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_s2 * t * sigma;
      const Eigen::Matrix<double, 2, 3> g_j = g_t * w.transpose();

      const double iz = 1.0 / p.z(), iz2 = iz * iz, iz3 = iz2 * iz;
      const double fx = camera.fx, fy = camera.fy;
      Vec3 g_p;
      g_p.x() = gmx * fx * iz - g_j(0, 2) * fx * iz2;
      g_p.y() = gmy * fy * iz - g_j(1, 2) * fy * iz2;
      g_p.z() = -gmx * fx * p.x() * iz2 - gmy * fy * p.y() * iz2 - g_j(0, 0) * fx * iz2 +
                2.0 * g_j(0, 2) * fx * p.x() * iz3 - g_j(1, 1) * fy * iz2 + 2.0 * g_j(1, 2) * fy * p.y() * iz3;
      grads.centers.row(i) = (w.transpose() * g_p).transpose();

      const Mat3 g_m = 2.0 * g_sigma * m;
      const Vec3 s = cloud.log_scales.row(i).array().exp();
      Mat3 g_r;
      for (int c = 0; c < 3; ++c) {
        g_r.col(c) = g_m.col(c) * s(c);
        grads.log_scales(i, c) = s(c) * r.col(c).dot(g_m.col(c));
      }
      grads.rotations.row(i) = quat_to_matrix_backward(q, g_r).transpose();
    }
  });
  return grads;
}

RenderOutput render(const GaussianCloud& cloud, const Points3& directions, const Camera& camera,
                    const RasterSettings& settings, ProjectedGaussians* projected_out) {
  ProjectedGaussians pg = project_gaussians(cloud, directions, camera, settings);
  RenderOutput out = rasterize_forward(pg, camera.width, camera.height, settings);
  if (projected_out) *projected_out = std::move(pg);
  return out;
}

Image render_mask(const Image& depth, const Image& alpha, double threshold) {
  if (depth.width != alpha.width || depth.height != alpha.height) {
    throw ShapeError("render_mask: depth and alpha sizes differ");
  }
  Image mask(depth.width, depth.height, 1);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      mask.at(x, y) = (alpha.at(x, y) > 0.5 && depth.at(x, y) < threshold) ? 1.0 : 0.0;
    }
  }
  return mask;
}

} // namespace gavatar
