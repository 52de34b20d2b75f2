#include "gavatar/face_grid.h"

#include "gavatar/deformation.h"

#include <algorithm>
#include <cmath>

namespace gavatar {

FaceGrid::FaceGrid(const Points3& vertices, const FaceIndices& faces) : vertices_(vertices), faces_(faces) {
  const int f_count = static_cast<int>(faces.rows());
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  double mean_extent = 0.0;
  std::vector<Vec3> f_lo(f_count), f_hi(f_count);
  for (int f = 0; f < f_count; ++f) {
    f_lo[f] = vertices.row(faces(f, 0)).transpose();
    f_hi[f] = f_lo[f];
    for (int k = 1; k < 3; ++k) {
      const Vec3 v = vertices.row(faces(f, k)).transpose();
      f_lo[f] = f_lo[f].cwiseMin(v);
      f_hi[f] = f_hi[f].cwiseMax(v);
    }
    lo = lo.cwiseMin(f_lo[f]);
    hi = hi.cwiseMax(f_hi[f]);
    mean_extent += (f_hi[f] - f_lo[f]).maxCoeff();
  }
  if (f_count == 0) {
    lo.setZero();
    hi.setZero();
  } else {
    mean_extent /= f_count;
  }
  const double span = (hi - lo).maxCoeff();
  cell_ = std::max({1.5 * mean_extent, span / 128.0, 1e-9});
  origin_ = lo;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::max(1, static_cast<int>(std::floor((hi[a] - lo[a]) / cell_)) + 1);
  }

  const int cells = dims_.prod();
  std::vector<int> counts(cells + 1, 0);
  auto for_cells = [&](int f, auto&& visit) {
    const Eigen::Vector3i a = cell_of(f_lo[f]);
    const Eigen::Vector3i b = cell_of(f_hi[f]);
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) visit(linear(x, y, z));
  };
  for (int f = 0; f < f_count; ++f) {
    for_cells(f, [&](int c) { ++counts[c + 1]; });
  }
  for (int c = 0; c < cells; ++c) {
    counts[c + 1] += counts[c];
  }
  cell_start_ = counts;
  cell_faces_.resize(counts[cells]);
  std::vector<int> cursor(counts.begin(), counts.end() - 1);
  for (int f = 0; f < f_count; ++f) {
    for_cells(f, [&](int c) { cell_faces_[cursor[c]++] = f; });
  }
}

Eigen::Vector3i FaceGrid::cell_of(const Vec3& p) const {
  Eigen::Vector3i c;
  for (int a = 0; a < 3; ++a) {
    const double t = std::floor((p[a] - origin_[a]) / cell_);
    c[a] = static_cast<int>(std::clamp(t, 0.0, static_cast<double>(dims_[a] - 1)));
  }
  return c;
}

FaceGrid::Hit FaceGrid::nearest(const Vec3& p) const {
  Hit best;
  if (faces_.rows() == 0) {
    return best;
  }
  const Eigen::Vector3i c = cell_of(p);
  const int max_r = dims_.maxCoeff();
  auto consider = [&](int f) {
    const double d = point_triangle_distance(p, vertices_.row(faces_(f, 0)).transpose(),
                                             vertices_.row(faces_(f, 1)).transpose(),
                                             vertices_.row(faces_(f, 2)).transpose());
    if (d < best.distance || (d == best.distance && f < best.face)) {
      best.distance = d;
      best.face = f;
    }
  };
  for (int r = 0; r <= max_r; ++r) {
    Eigen::Vector3i lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, c[a] - r);
      hi[a] = std::min(dims_[a] - 1, c[a] + r);
    }
    for (int z = lo.z(); z <= hi.z(); ++z) {
      for (int y = lo.y(); y <= hi.y(); ++y) {
        for (int x = lo.x(); x <= hi.x(); ++x) {
          const int cheb = std::max({std::abs(x - c.x()), std::abs(y - c.y()), std::abs(z - c.z())});
          if (cheb != r) {
            continue;
          }
          const int id = linear(x, y, z);
          for (int k = cell_start_[id]; k < cell_start_[id + 1]; ++k) {
            consider(cell_faces_[k]);
          }
        }
      }
    }
    // Any face not yet seen lies wholly outside the searched block; its distance
    // is at least the distance from p to the nearest interior block side.
    double bound = std::numeric_limits<double>::infinity();
    bool covers_all = true;
    for (int a = 0; a < 3; ++a) {
      if (lo[a] > 0) {
        covers_all = false;
        bound = std::min(bound, p[a] - (origin_[a] + lo[a] * cell_));
      }
      if (hi[a] < dims_[a] - 1) {
        covers_all = false;
        bound = std::min(bound, origin_[a] + (hi[a] + 1) * cell_ - p[a]);
      }
    }
    if (covers_all || best.distance + 1e-9 < bound) {
      break;
    }
  }
  return best;
}

} // namespace gavatar
