#pragma once

#include "gavatar/common.h"

#include <limits>
#include <vector>

namespace gavatar {

/// Uniform grid over triangle bounding boxes for nearest-triangle queries.
class FaceGrid {
 public:
  FaceGrid(const Points3& vertices, const FaceIndices& faces);

  struct Hit {
    int face = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  /// Exact nearest face; ties resolve to the lowest face index.
  Hit nearest(const Vec3& p) const;

 private:
  Eigen::Vector3i cell_of(const Vec3& p) const;
  int linear(int x, int y, int z) const { return (z * dims_.y() + y) * dims_.x() + x; }

  const Points3& vertices_;
  const FaceIndices& faces_;
  Vec3 origin_;
  double cell_ = 1.0;
  Eigen::Vector3i dims_;
  std::vector<int> cell_start_;
  std::vector<int> cell_faces_;
};

} // namespace gavatar
