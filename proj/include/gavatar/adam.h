#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gavatar {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
};

/// Moment buffers for one parameter array of `rows` rows by `width` values.
/// Rows can be gathered and appended as the parameter set changes size.
class AdamState {
 public:
  AdamState() = default;
  AdamState(int rows, int width) { reset(rows, width); }

  void reset(int rows, int width);
  int rows() const { return width_ == 0 ? 0 : static_cast<int>(m_.size() / width_); }
  int width() const { return width_; }
  std::int64_t step() const { return step_; }

  /// One bias-corrected step over all rows. `lr` holds one rate per column.
  void update(double* param, const double* grad, std::span<const double> lr, const AdamHyper& hyper);
  void update(double* param, const double* grad, double lr, const AdamHyper& hyper);

  /// Keeps rows by source index; negative indices create zeroed rows.
  void gather(std::span<const int> sources);

  std::vector<double>& first() { return m_; }
  std::vector<double>& second() { return v_; }
  const std::vector<double>& first() const { return m_; }
  const std::vector<double>& second() const { return v_; }
  void set_step(std::int64_t s) { step_ = s; }

 private:
  int width_ = 0;
  std::int64_t step_ = 0;
  std::vector<double> m_, v_;
};

} // namespace gavatar
