#include "gavatar/losses.h"

#include "gavatar/common.h"

#include <array>
#include <cmath>
#include <limits>

namespace gavatar {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.size() == 0) {
    throw ShapeError(std::string(what) + ": images must be non-empty and the same shape");
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Single-channel plane with its own width/height.
struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Valid-mode separable Gaussian filter: output is (w-10)x(h-10).
Plane filter_valid(const Plane& in) {
  static const auto g = gaussian_window();
  const int ow = in.w - kSsimWindow + 1, oh = in.h - kSsimWindow + 1;
  Plane tmp(ow, in.h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * in.at(x + k, y);
      tmp.at(x, y) = s;
    }
  }
  Plane out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * tmp.at(x, y + k);
      out.at(x, y) = s;
    }
  }
  return out;
}

// Adjoint of filter_valid: scatters window values back onto the full plane.
Plane filter_valid_adjoint(const Plane& in, int w, int h) {
  static const auto g = gaussian_window();
  Plane tmp(in.w, h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int k = 0; k < kSsimWindow; ++k) tmp.at(x, y + k) += g[k] * in.at(x, y);
    }
  }
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int k = 0; k < kSsimWindow; ++k) out.at(x + k, y) += g[k] * tmp.at(x, y);
    }
  }
  return out;
}

Plane channel(const Image& img, int c) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) p.at(x, y) = img.at(x, y, c);
  }
  return p;
}

Plane product(const Plane& a, const Plane& b) {
  Plane p(a.w, a.h);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = a.v[i] * b.v[i];
  return p;
}

// Mean SSIM; fills grad (d mean SSIM / d pred) when non-null.
double ssim_impl(const Image& pred, const Image& gt, Image* grad) {
  require_same_shape(pred, gt, "ssim");
  if (pred.width < kSsimWindow || pred.height < kSsimWindow) {
    throw ShapeError("ssim: images must be at least 11x11");
  }
  const int ow = pred.width - kSsimWindow + 1, oh = pred.height - kSsimWindow + 1;
  const double count = static_cast<double>(ow) * oh * pred.channels;
  if (grad) *grad = Image(pred.width, pred.height, pred.channels);
  double total = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    const Plane x = channel(pred, c), y = channel(gt, c);
    const Plane mx = filter_valid(x), my = filter_valid(y);
    const Plane exx = filter_valid(product(x, x)), eyy = filter_valid(product(y, y));
    const Plane exy = filter_valid(product(x, y));
    Plane d_mu(ow, oh), d_exx(ow, oh), d_exy(ow, oh);
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
      const double ux = mx.v[i], uy = my.v[i];
      const double sxx = exx.v[i] - ux * ux, syy = eyy.v[i] - uy * uy, sxy = exy.v[i] - ux * uy;
      const double a1 = 2.0 * ux * uy + kSsimC1, a2 = 2.0 * sxy + kSsimC2;
      const double b1 = ux * ux + uy * uy + kSsimC1, b2 = sxx + syy + kSsimC2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (grad) {
        d_mu.v[i] = s * (2.0 * uy / a1 - 2.0 * uy / a2 - 2.0 * ux / b1 + 2.0 * ux / b2) / count;
        d_exx.v[i] = -s / b2 / count;
        d_exy.v[i] = 2.0 * s / a2 / count;
      }
    }
    if (grad) {
      const Plane gm = filter_valid_adjoint(d_mu, x.w, x.h);
      const Plane gxx = filter_valid_adjoint(d_exx, x.w, x.h);
      const Plane gxy = filter_valid_adjoint(d_exy, x.w, x.h);
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          grad->at(xx, yy, c) = gm.at(xx, yy) + 2.0 * x.at(xx, yy) * gxx.at(xx, yy) + y.at(xx, yy) * gxy.at(xx, yy);
        }
      }
    }
  }
  return total / count;
}

} // namespace

void LossWeights::validate() const {
  for (double w : {l1, ssim, lpips}) {
    if (!std::isfinite(w) || w < 0.0) throw ValidationError("loss weights must be finite and non-negative");
  }
}

LossValue loss_l1(const Image& pred, const Image& gt) {
  require_same_shape(pred, gt, "loss_l1");
  LossValue out;
  out.grad = Image(pred.width, pred.height, pred.channels);
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    sum += std::abs(d);
    out.grad.data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  out.value = sum * inv;
  return out;
}

LossValue loss_ssim(const Image& pred, const Image& gt) {
  LossValue out;
  out.value = 1.0 - ssim_impl(pred, gt, &out.grad);
  for (double& g : out.grad.data) g = -g;
  return out;
}

TotalLoss total_loss(const Image& pred, const Image& gt, const LossWeights& weights,
                     const PerceptualHook& perceptual) {
  weights.validate();
  require_same_shape(pred, gt, "total_loss");
  TotalLoss out;
  out.grad = Image(pred.width, pred.height, pred.channels);
  auto accumulate = [&](const LossValue& term, double w) {
    if (w == 0.0) return;
    if (!term.grad.same_shape(pred)) throw ShapeError("total_loss: term gradient has the wrong shape");
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad.data[i] += w * term.grad.data[i];
  };
  const LossValue l1 = loss_l1(pred, gt);
  out.l1 = l1.value;
  accumulate(l1, weights.l1);
  if (weights.ssim != 0.0) {
    const LossValue s = loss_ssim(pred, gt);
    out.ssim = s.value;
    accumulate(s, weights.ssim);
  }
  if (perceptual && weights.lpips != 0.0) {
    const LossValue p = perceptual(pred, gt);
    out.perceptual = p.value;
    accumulate(p, weights.lpips);
  }
  out.total = weights.l1 * out.l1 + weights.ssim * out.ssim + weights.lpips * out.perceptual;
  return out;
}

double metric_psnr(const Image& pred, const Image& gt, double cap) {
  require_same_shape(pred, gt, "metric_psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(pred.size());
  if (mse == 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

double metric_ssim(const Image& pred, const Image& gt) { return ssim_impl(pred, gt, nullptr); }

double mask_iou(const Image& a, const Image& b) {
  require_same_shape(a, b, "mask_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data[i] > 0.5, y = b.data[i] > 0.5;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace gavatar
