#include "gavatar/adam.h"

#include "gavatar/common.h"

#include <cmath>

namespace gavatar {

void AdamState::reset(int rows, int width) {
  width_ = width;
  step_ = 0;
  m_.assign(static_cast<std::size_t>(rows) * width, 0.0);
  v_.assign(m_.size(), 0.0);
}

void AdamState::update(double* param, const double* grad, std::span<const double> lr, const AdamHyper& h) {
  if (static_cast<int>(lr.size()) != width_) throw ShapeError("AdamState::update: one rate per column required");
  ++step_;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step_));
  const std::size_t n = m_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grad[k];
    m_[k] = h.beta1 * m_[k] + (1.0 - h.beta1) * g;
    v_[k] = h.beta2 * v_[k] + (1.0 - h.beta2) * g * g;
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    param[k] -= lr[k % width_] * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
}

void AdamState::update(double* param, const double* grad, double lr, const AdamHyper& h) {
  const std::vector<double> rates(width_, lr);
  update(param, grad, rates, h);
}

void AdamState::gather(std::span<const int> sources) {
  std::vector<double> m(sources.size() * width_, 0.0), v(m.size(), 0.0);
  const int n = rows();
  for (std::size_t r = 0; r < sources.size(); ++r) {
    const int s = sources[r];
    if (s < 0) continue;
    if (s >= n) throw ShapeError("AdamState::gather: source row out of range");
    for (int c = 0; c < width_; ++c) {
      m[r * width_ + c] = m_[static_cast<std::size_t>(s) * width_ + c];
      v[r * width_ + c] = v_[static_cast<std::size_t>(s) * width_ + c];
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
}

} // namespace gavatar
