#include "gavatar/gaussian_cloud.h"

#include "gavatar/rotation.h"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace gavatar {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void GaussianCloud::resize(int n) {
  centers.conservativeResize(n, 3);
  rotations.conservativeResize(n, 4);
  log_scales.conservativeResize(n, 3);
  opacity_logits.conservativeResize(n);
  sh.conservativeResize(n, 3 * sh_count());
  parents.resize(n);
  canonical_normals.conservativeResize(n, 3);
}

GaussianCloud GaussianCloud::select(std::span<const int> indices) const {
  GaussianCloud out(sh_degree);
  const int n = static_cast<int>(indices.size());
  out.resize(n);
  for (int i = 0; i < n; ++i) {
    const int s = indices[i];
    out.centers.row(i) = centers.row(s);
    out.rotations.row(i) = rotations.row(s);
    out.log_scales.row(i) = log_scales.row(s);
    out.opacity_logits[i] = opacity_logits[s];
    out.sh.row(i) = sh.row(s);
    out.parents[i] = parents[s];
    out.canonical_normals.row(i) = canonical_normals.row(s);
  }
  return out;
}

std::vector<int> GaussianCloud::human_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (parents[i].is_face()) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<int> GaussianCloud::background_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (!parents[i].is_face()) {
      out.push_back(i);
    }
  }
  return out;
}

int GaussianCloud::human_count() const {
  int n = 0;
  for (const auto& p : parents) {
    n += p.is_face() ? 1 : 0;
  }
  return n;
}

std::vector<std::string> audit_cloud(const GaussianCloud& cloud, int face_count) {
  std::vector<std::string> issues;
  auto report = [&](int i, const std::string& what) {
    std::ostringstream s;
    s << "gaussian " << i << ": " << what;
    issues.push_back(s.str());
  };
  for (int i = 0; i < cloud.size(); ++i) {
    if (std::abs(cloud.rotations.row(i).norm() - 1.0) > 1e-6) {
      report(i, "quaternion not unit norm");
    }
    const double o = sigmoid(cloud.opacity_logits[i]);
    if (!(o > 0.0 && o < 1.0)) {
      report(i, "opacity outside (0,1)");
    }
    const ParentId p = cloud.parents[i];
    if (!p.is_background() && !(p.is_face() && p.face_index() < face_count)) {
      report(i, "invalid parent id " + std::to_string(p.code()));
    }
    if (p.is_face() && std::abs(cloud.canonical_normals.row(i).norm() - 1.0) > 1e-6) {
      report(i, "human gaussian without unit canonical normal");
    }
    if (!cloud.centers.row(i).allFinite() || !cloud.log_scales.row(i).allFinite() || !cloud.sh.row(i).allFinite()) {
      report(i, "non-finite attribute");
    }
  }
  return issues;
}

GaussianCloud init_human_gaussians(const PosedBody& canonical, int sh_degree, double init_scale) {
  if (init_scale <= 0.0) {
    init_scale = mean_edge_length(canonical.vertices, *canonical.faces);
  }
  const int f_count = canonical.face_count();
  GaussianCloud cloud(sh_degree);
  cloud.resize(f_count);
  cloud.sh.setZero();  // DC 0 is mid-gray under the +0.5 color offset
  const double log_scale = std::log(init_scale);
  const double opacity = logit(kInitialOpacity);
  for (int f = 0; f < f_count; ++f) {
    cloud.centers.row(f) = canonical.face_centers.row(f);
    cloud.rotations.row(f) = quat_from_matrix(canonical.face_rotations[f]).transpose();
    cloud.log_scales.row(f).setConstant(log_scale);
    cloud.opacity_logits[f] = opacity;
    cloud.parents[f] = ParentId::face(f);
    cloud.canonical_normals.row(f) = canonical.face_normals.row(f);
  }
  return cloud;
}

GaussianCloud init_background_gaussians(int count, double radius, std::uint64_t seed, int sh_degree) {
  if (count < 0 || !(radius > 0.0)) {
    throw std::invalid_argument("init_background_gaussians: need count >= 0 and radius > 0");
  }
  GaussianCloud cloud(sh_degree);
  cloud.resize(count);
  cloud.sh.setZero();
  cloud.canonical_normals.setZero();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> color(0.25, 0.75);
  // Spacing of a uniform covering; each Gaussian spans about one cell.
  const double spacing = count > 0 ? std::sqrt(4.0 * std::numbers::pi * radius * radius / count) : 1.0;
  const double log_scale = std::log(0.5 * spacing);
  for (int i = 0; i < count; ++i) {
    Vec3 d;
    do {
      d = Vec3(normal(rng), normal(rng), normal(rng));
    } while (d.norm() < 1e-9);
    cloud.centers.row(i) = (radius * d.normalized()).transpose();
    cloud.rotations.row(i) = quat_identity().transpose();
    cloud.log_scales.row(i).setConstant(log_scale);
    cloud.opacity_logits[i] = logit(kInitialOpacity);
    for (int c = 0; c < 3; ++c) {
      cloud.sh(i, c) = (color(rng) - 0.5) / kShC0;
    }
    cloud.parents[i] = ParentId::background();
  }
  return cloud;
}

GaussianCloud concat(const GaussianCloud& a, const GaussianCloud& b) {
  if (a.sh_degree != b.sh_degree) {
    throw ShapeError("concat: SH degree mismatch (" + std::to_string(a.sh_degree) + " vs " +
                     std::to_string(b.sh_degree) + ")");
  }
  GaussianCloud out(a.sh_degree);
  out.resize(a.size() + b.size());
  const int na = a.size();
  const int nb = b.size();
  out.centers.topRows(na) = a.centers;
  out.centers.bottomRows(nb) = b.centers;
  out.rotations.topRows(na) = a.rotations;
  out.rotations.bottomRows(nb) = b.rotations;
  out.log_scales.topRows(na) = a.log_scales;
  out.log_scales.bottomRows(nb) = b.log_scales;
  out.opacity_logits.head(na) = a.opacity_logits;
  out.opacity_logits.tail(nb) = b.opacity_logits;
  out.sh.topRows(na) = a.sh;
  out.sh.bottomRows(nb) = b.sh;
  out.canonical_normals.topRows(na) = a.canonical_normals;
  out.canonical_normals.bottomRows(nb) = b.canonical_normals;
  std::copy(a.parents.begin(), a.parents.end(), out.parents.begin());
  std::copy(b.parents.begin(), b.parents.end(), out.parents.begin() + na);
  return out;
}

} // namespace gavatar
