#pragma once

// Deformation refinement network: joint-offset encoding, a 13-layer fully
// connected network with input skips, and the conversion of its 7-channel
// output into per-Gaussian residual rigid motions.

#include "gavatar/common.h"
#include "gavatar/deformation.h"

#include <array>
#include <cstdint>
#include <vector>

namespace gavatar {

struct OutputBounds {
  enum class Mode { Bounded, Unbounded };

  Mode mode = Mode::Bounded;
  /// Bounded: maximum |translation| (m) and |angle| (rad). Unbounded: per-unit scales.
  double translation = 0.10;
  double angle = 30.0 * 3.14159265358979323846 / 180.0;

  static OutputBounds bounded(double t_max, double angle_max);
  static OutputBounds unbounded(double t_scale, double angle_scale);
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out × in
  Eigen::VectorXd bias;    // out
};

class DrmNetwork {
 public:
  static constexpr int kLayerCount = 13;
  static constexpr int kOutputDim = 7;
  /// Zero-based indices of the layers that take [hidden, input] (the 5th and 9th layers).
  static constexpr std::array<int, 2> kSkipLayers = {4, 8};

  DrmNetwork() = default;
  DrmNetwork(int joint_count, int hidden, OutputBounds bounds);

  /// Kaiming-uniform hidden layers, zero biases, zero output weights; the output
  /// bias is zero except the axis z channel (identity residual at start).
  void initialize(std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int joint_count() const { return input_dim_ / 3; }
  const OutputBounds& bounds() const { return bounds_; }
  void set_bounds(const OutputBounds& b) { bounds_ = b; }

  static bool is_skip(int layer) { return layer == kSkipLayers[0] || layer == kSkipLayers[1]; }
  int layer_input_dim(int layer) const;
  int layer_output_dim(int layer) const { return layer == kLayerCount - 1 ? kOutputDim : hidden_; }

  std::array<DenseLayer, kLayerCount> layers;

  /// Throws ShapeError when the layer shape chain is inconsistent.
  void check_shapes() const;

 private:
  int input_dim_ = 0;
  int hidden_ = 0;
  OutputBounds bounds_;
};

struct DrmCache {
  std::array<Eigen::MatrixXd, DrmNetwork::kLayerCount> inputs;      // per-layer input batch
  std::array<Eigen::MatrixXd, DrmNetwork::kLayerCount - 1> active;  // ReLU masks (1 where z > 0)
  Eigen::Index batch = 0;
};

struct DrmForward {
  Eigen::MatrixXd raw;  // N × 7
  DrmCache cache;
};

struct DrmGradients {
  std::array<DenseLayer, DrmNetwork::kLayerCount> layers;
  Eigen::MatrixXd input;  // N × 3J
};

/// Row i = concat over joints j of (position_i - joint_j).
Eigen::MatrixXd encode_joint_distances(const Points3& positions, const Points3& joints);

DrmForward drm_forward(const DrmNetwork& net, const Eigen::MatrixXd& encoding);
/// weight_grads = false leaves layer gradients empty and only fills the input gradient.
DrmGradients drm_backward(const DrmNetwork& net, const DrmCache& cache, const Eigen::MatrixXd& grad_raw,
                          bool weight_grads = true);

/// Raw channels: 0-2 translation, 3 angle, 4-6 axis (normalized; near-zero axis means no rotation).
ResidualTransform postprocess_row(const Eigen::Ref<const Eigen::RowVectorXd>& raw, const OutputBounds& bounds);
std::vector<ResidualTransform> postprocess_output(const Eigen::MatrixXd& raw, const OutputBounds& bounds);

/// dL/draw for one row given dL/dtranslation and dL/dquaternion of the residual.
Eigen::Matrix<double, 1, 7> postprocess_backward(const Eigen::Ref<const Eigen::RowVectorXd>& raw,
                                                 const OutputBounds& bounds, const Vec3& grad_translation,
                                                 const Vec4& grad_rotation);

} // namespace gavatar
