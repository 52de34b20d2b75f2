#include "gavatar/drm.h"

#include "gavatar/gaussian_cloud.h"
#include "gavatar/rotation.h"

#include <cmath>
#include <random>

namespace gavatar {

namespace {

constexpr double kMinAxisNorm = 1e-8;

// 2σ(x) − 1 and its derivative 2σ(x)(1 − σ(x)).
double centered_sigmoid(double x) { return 2.0 * sigmoid(x) - 1.0; }
double centered_sigmoid_grad(double x) {
  const double s = sigmoid(x);
  return 2.0 * s * (1.0 - s);
}

} // namespace

OutputBounds OutputBounds::bounded(double t_max, double angle_max) {
  if (!(t_max > 0.0) || !(angle_max > 0.0)) {
    throw std::invalid_argument("OutputBounds: bounds must be positive");
  }
  return {Mode::Bounded, t_max, angle_max};
}

OutputBounds OutputBounds::unbounded(double t_scale, double angle_scale) {
  if (!(t_scale > 0.0) || !(angle_scale > 0.0)) {
    throw std::invalid_argument("OutputBounds: scales must be positive");
  }
  return {Mode::Unbounded, t_scale, angle_scale};
}

DrmNetwork::DrmNetwork(int joint_count, int hidden, OutputBounds bounds)
    : input_dim_(3 * joint_count), hidden_(hidden), bounds_(bounds) {
  if (joint_count < 1 || hidden < 1) {
    throw std::invalid_argument("DrmNetwork: need joint_count >= 1 and hidden >= 1");
  }
  for (int l = 0; l < kLayerCount; ++l) {
    layers[l].weight = Eigen::MatrixXd::Zero(layer_output_dim(l), layer_input_dim(l));
    layers[l].bias = Eigen::VectorXd::Zero(layer_output_dim(l));
  }
}

int DrmNetwork::layer_input_dim(int layer) const {
  if (layer == 0) {
    return input_dim_;
  }
  return is_skip(layer) ? hidden_ + input_dim_ : hidden_;
}

void DrmNetwork::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int l = 0; l < kLayerCount; ++l) {
    auto& layer = layers[l];
    layer.bias.setZero();
    if (l == kLayerCount - 1) {
      // Zero angle keeps the residual at identity, while a fixed unit axis keeps
      // the angle and axis gradients alive (they vanish at a zero axis).
      layer.weight.setZero();
      layer.bias[6] = 1.0;
      continue;
    }
    const double bound = std::sqrt(6.0 / layer_input_dim(l));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = dist(rng);
      }
    }
  }
}

void DrmNetwork::check_shapes() const {
  for (int l = 0; l < kLayerCount; ++l) {
    if (layers[l].weight.rows() != layer_output_dim(l) || layers[l].weight.cols() != layer_input_dim(l) ||
        layers[l].bias.size() != layer_output_dim(l)) {
      throw ShapeError("DrmNetwork: layer " + std::to_string(l) + " has inconsistent shape");
    }
  }
}

Eigen::MatrixXd encode_joint_distances(const Points3& positions, const Points3& joints) {
  const Eigen::Index n = positions.rows();
  const Eigen::Index j = joints.rows();
  Eigen::MatrixXd enc(n, 3 * j);
  for (Eigen::Index k = 0; k < j; ++k) {
    for (int c = 0; c < 3; ++c) {
      enc.col(3 * k + c) = positions.col(c).array() - joints(k, c);
    }
  }
  return enc;
}

DrmForward drm_forward(const DrmNetwork& net, const Eigen::MatrixXd& encoding) {
  if (encoding.cols() != net.input_dim()) {
    throw ShapeError("drm_forward: encoding width " + std::to_string(encoding.cols()) + " != input dim " +
                     std::to_string(net.input_dim()));
  }
  DrmForward out;
  const Eigen::Index n = encoding.rows();
  out.cache.batch = n;
  Eigen::MatrixXd h = encoding;
  for (int l = 0; l < DrmNetwork::kLayerCount; ++l) {
    Eigen::MatrixXd in;
    if (DrmNetwork::is_skip(l)) {
      in.resize(n, h.cols() + encoding.cols());
      in << h, encoding;
    } else {
      in = std::move(h);
    }
    const auto& layer = net.layers[l];
    Eigen::MatrixXd z = in * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    out.cache.inputs[l] = std::move(in);
    if (l < DrmNetwork::kLayerCount - 1) {
      out.cache.active[l] = (z.array() > 0.0).cast<double>().matrix();
      h = z.cwiseMax(0.0);
    } else {
      out.raw = std::move(z);
    }
  }
  return out;
}

DrmGradients drm_backward(const DrmNetwork& net, const DrmCache& cache, const Eigen::MatrixXd& grad_raw,
                          bool weight_grads) {
  if (grad_raw.rows() != cache.batch || grad_raw.cols() != DrmNetwork::kOutputDim) {
    throw ShapeError("drm_backward: upstream gradient does not match the cached batch");
  }
  DrmGradients g;
  const int hidden = net.hidden();
  g.input = Eigen::MatrixXd::Zero(cache.batch, net.input_dim());
  Eigen::MatrixXd dz = grad_raw;
  for (int l = DrmNetwork::kLayerCount - 1; l >= 0; --l) {
    if (l < DrmNetwork::kLayerCount - 1) {
      dz.array() *= cache.active[l].array();
    }
    if (weight_grads) {
      g.layers[l].weight = dz.transpose() * cache.inputs[l];
      g.layers[l].bias = dz.colwise().sum().transpose();
    }
    Eigen::MatrixXd din = dz * net.layers[l].weight;
    if (l == 0) {
      g.input += din;
    } else if (DrmNetwork::is_skip(l)) {
      g.input += din.rightCols(net.input_dim());
      dz = din.leftCols(hidden);
    } else {
      dz = std::move(din);
    }
  }
  return g;
}

ResidualTransform postprocess_row(const Eigen::Ref<const Eigen::RowVectorXd>& raw, const OutputBounds& bounds) {
  ResidualTransform r;
  double angle;
  if (bounds.mode == OutputBounds::Mode::Bounded) {
    for (int k = 0; k < 3; ++k) {
      r.translation[k] = bounds.translation * centered_sigmoid(raw[k]);
    }
    angle = bounds.angle * centered_sigmoid(raw[3]);
  } else {
    for (int k = 0; k < 3; ++k) {
      r.translation[k] = bounds.translation * raw[k];
    }
    angle = bounds.angle * raw[3];
  }
  const Vec3 axis(raw[4], raw[5], raw[6]);
  const double norm = axis.norm();
  if (norm < kMinAxisNorm) {
    r.rotation = quat_identity();
  } else {
    r.rotation = quat_from_axis_angle(axis / norm, angle);
  }
  return r;
}

std::vector<ResidualTransform> postprocess_output(const Eigen::MatrixXd& raw, const OutputBounds& bounds) {
  if (raw.cols() != DrmNetwork::kOutputDim) {
    throw ShapeError("postprocess_output: expected 7 channels");
  }
  std::vector<ResidualTransform> out(raw.rows());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    out[i] = postprocess_row(raw.row(i), bounds);
  }
  return out;
}

Eigen::Matrix<double, 1, 7> postprocess_backward(const Eigen::Ref<const Eigen::RowVectorXd>& raw,
                                                 const OutputBounds& bounds, const Vec3& grad_translation,
                                                 const Vec4& grad_rotation) {
  Eigen::Matrix<double, 1, 7> g = Eigen::Matrix<double, 1, 7>::Zero();
  const bool bounded = bounds.mode == OutputBounds::Mode::Bounded;
  for (int k = 0; k < 3; ++k) {
    g[k] = grad_translation[k] * bounds.translation * (bounded ? centered_sigmoid_grad(raw[k]) : 1.0);
  }
  const Vec3 axis(raw[4], raw[5], raw[6]);
  const double norm = axis.norm();
  if (norm < kMinAxisNorm) {
    return g;
  }
  const Vec3 u = axis / norm;
  const double angle = bounded ? bounds.angle * centered_sigmoid(raw[3]) : bounds.angle * raw[3];
  const double half_sin = std::sin(0.5 * angle);
  const double half_cos = std::cos(0.5 * angle);
  const Vec3 g_vec = grad_rotation.tail<3>();
  const double d_angle = -0.5 * half_sin * grad_rotation[0] + 0.5 * half_cos * u.dot(g_vec);
  g[3] = d_angle * bounds.angle * (bounded ? centered_sigmoid_grad(raw[3]) : 1.0);
  const Vec3 d_axis = half_sin * (g_vec - u * u.dot(g_vec)) / norm;
  g[4] = d_axis[0];
  g[5] = d_axis[1];
  g[6] = d_axis[2];
  return g;
}

} // namespace gavatar
