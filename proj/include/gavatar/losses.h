#pragma once

#include "gavatar/image.h"

#include <functional>
#include <optional>

namespace gavatar {

struct LossValue {
  double value = 0.0;
  Image grad;
};

struct LossWeights {
  double l1 = 0.6;
  double ssim = 0.4;
  double lpips = 0.4;

  void validate() const;
};

/// External perceptual term: returns (value, dvalue/dpred) for (pred, gt).
using PerceptualHook = std::function<LossValue(const Image& pred, const Image& gt)>;

LossValue loss_l1(const Image& pred, const Image& gt);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 1 - mean SSIM over all fully-contained 11x11 windows and channels.
LossValue loss_ssim(const Image& pred, const Image& gt);

struct TotalLoss {
  double total = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;
  double perceptual = 0.0;
  Image grad;
};

TotalLoss total_loss(const Image& pred, const Image& gt, const LossWeights& weights,
                     const PerceptualHook& perceptual = nullptr);

double metric_psnr(const Image& pred, const Image& gt, double cap = 100.0);
double metric_ssim(const Image& pred, const Image& gt);
/// Intersection over union of binary masks (> 0.5); two empty masks give 1.
double mask_iou(const Image& a, const Image& b);

} // namespace gavatar
