#include "doctest.h"
#include "support.h"

#include "gavatar/common.h"
#include "gavatar/losses.h"

using namespace gtest;

namespace {

Image random_image(Rng& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
  Image img(w, h, c);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

// Direct windowed SSIM with a full 2-D kernel, one window at a time.
double reference_ssim(const Image& a, const Image& b) {
  const int r = kSsimWindow / 2;
  std::vector<double> k(kSsimWindow * kSsimWindow);
  double norm = 0.0;
  for (int j = 0; j < kSsimWindow; ++j) {
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d2 = (i - r) * (i - r) + (j - r) * (j - r);
      k[j * kSsimWindow + i] = std::exp(-d2 / (2.0 * kSsimSigma * kSsimSigma));
      norm += k[j * kSsimWindow + i];
    }
  }
  for (double& v : k) v /= norm;
  double total = 0.0;
  int windows = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y0 = 0; y0 + kSsimWindow <= a.height; ++y0) {
      for (int x0 = 0; x0 + kSsimWindow <= a.width; ++x0) {
        double ma = 0, mb = 0;
        for (int j = 0; j < kSsimWindow; ++j) {
          for (int i = 0; i < kSsimWindow; ++i) {
            ma += k[j * kSsimWindow + i] * a.at(x0 + i, y0 + j, c);
            mb += k[j * kSsimWindow + i] * b.at(x0 + i, y0 + j, c);
          }
        }
        double vaa = 0, vbb = 0, vab = 0;
        for (int j = 0; j < kSsimWindow; ++j) {
          for (int i = 0; i < kSsimWindow; ++i) {
            const double da = a.at(x0 + i, y0 + j, c) - ma, db = b.at(x0 + i, y0 + j, c) - mb;
            vaa += k[j * kSsimWindow + i] * da * da;
            vbb += k[j * kSsimWindow + i] * db * db;
            vab += k[j * kSsimWindow + i] * da * db;
          }
        }
        total += (2 * ma * mb + kSsimC1) * (2 * vab + kSsimC2) / ((ma * ma + mb * mb + kSsimC1) * (vaa + vbb + kSsimC2));
        ++windows;
      }
    }
  }
  return total / windows;
}

void check_fd(const std::function<LossValue(const Image&)>& f, Image x, double h, double rel, double abs) {
  const LossValue base = f(x);
  int bad = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = central_difference(&x.data[i], h, [&] { return f(x).value; });
    if (!gradient_close(base.grad.data[i], numeric, rel, abs)) ++bad;
  }
  CHECK(bad == 0);
}

} // namespace

TEST_CASE("L1 loss values and subgradient") {
  Rng rng(1);
  const Image gt = random_image(rng, 16, 16, 3);
  CHECK(loss_l1(gt, gt).value == 0.0);
  for (double g : loss_l1(gt, gt).grad.data) CHECK(g == 0.0);

  Image shifted = gt;
  for (double& v : shifted.data) v += 0.5;
  CHECK(loss_l1(shifted, gt).value == doctest::Approx(0.5).epsilon(1e-12));

  // Keep every residual well away from zero so the finite difference never crosses a kink.
  Image pred = gt;
  for (double& v : pred.data) v += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 0.2);
  check_fd([&](const Image& p) { return loss_l1(p, gt); }, pred, 1e-6, 1e-4, 1e-10);

  CHECK_THROWS_AS(loss_l1(Image(4, 4, 3), Image(4, 5, 3)), ShapeError);
}

TEST_CASE("SSIM matches a direct windowed computation") {
  Rng rng(2);
  for (int trial = 0; trial < 4; ++trial) {
    const int w = rng.integer(11, 20), h = rng.integer(11, 20), c = rng.integer(1, 3);
    const Image a = random_image(rng, w, h, c), b = random_image(rng, w, h, c);
    CHECK(metric_ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-10));
    CHECK(loss_ssim(a, b).value == doctest::Approx(1.0 - reference_ssim(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("SSIM of constant images has a closed form") {
  for (auto [u, v] : {std::pair{0.3, 0.4}, std::pair{0.0, 0.1}, std::pair{0.8, 0.9}}) {
    const Image a(16, 16, 3, u), b(16, 16, 3, v);
    // Zero variances leave only the luminance term.
    const double expected = (2 * u * v + kSsimC1) / (u * u + v * v + kSsimC1);
    CHECK(loss_ssim(a, b).value == doctest::Approx(1.0 - expected).epsilon(1e-9));
  }
}

TEST_CASE("SSIM loss is zero on identical images and symmetric") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Image a = random_image(rng, 16, 16, 3), b = random_image(rng, 16, 16, 3);
    CHECK(std::abs(loss_ssim(a, a).value) <= 1e-12);
    CHECK(std::abs(loss_ssim(a, b).value - loss_ssim(b, a).value) <= 1e-9);
  }
}

TEST_CASE("SSIM gradient matches finite differences") {
  Rng rng(4);
  for (int c : {1, 3}) {
    const Image gt = random_image(rng, 16, 16, c), pred = random_image(rng, 16, 16, c);
    check_fd([&](const Image& p) { return loss_ssim(p, gt); }, pred, 1e-5, 1e-3, 1e-9);
  }
}

TEST_CASE("SSIM rejects images smaller than the window") {
  CHECK_THROWS_AS(loss_ssim(Image(10, 16, 1), Image(10, 16, 1)), ShapeError);
  CHECK_THROWS_AS(loss_ssim(Image(16, 10, 1), Image(16, 10, 1)), ShapeError);
  CHECK_THROWS_AS(loss_ssim(Image(16, 16, 1), Image(16, 16, 3)), ShapeError);
  CHECK_NOTHROW(loss_ssim(Image(11, 11, 1), Image(11, 11, 1)));
}

TEST_CASE("total loss is a weighted sum") {
  Rng rng(5);
  const Image gt = random_image(rng, 16, 16, 3), pred = random_image(rng, 16, 16, 3);
  const LossWeights defaults;
  CHECK(defaults.l1 == 0.6);
  CHECK(defaults.ssim == 0.4);
  CHECK(defaults.lpips == 0.4);
  CHECK(total_loss(gt, gt, defaults).total == 0.0);

  SUBCASE("constant hook adds exactly its weight") {
    const PerceptualHook one = [](const Image& p, const Image&) { return LossValue{1.0, Image(p.width, p.height, p.channels)}; };
    const double without = total_loss(pred, gt, defaults).total;
    const double with = total_loss(pred, gt, defaults, one).total;
    CHECK(with - without == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(total_loss(gt, gt, defaults, one).total == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("linear in each weight") {
    const PerceptualHook hook = [](const Image& p, const Image& g) { return loss_l1(p, g); };
    const double l1 = loss_l1(pred, gt).value, ss = loss_ssim(pred, gt).value;
    for (double s : {0.5, 3.0}) {
      LossWeights w{s * 0.6, s * 0.4, s * 0.4};
      const TotalLoss t = total_loss(pred, gt, w, hook);
      CHECK(t.total == doctest::Approx(s * (0.6 * l1 + 0.4 * ss + 0.4 * l1)).epsilon(1e-12));
      for (int which = 0; which < 3; ++which) {
        LossWeights z = w;
        (which == 0 ? z.l1 : which == 1 ? z.ssim : z.lpips) = 0.0;
        const double removed = which == 0 ? w.l1 * l1 : which == 1 ? w.ssim * ss : w.lpips * l1;
        CHECK(total_loss(pred, gt, z, hook).total == doctest::Approx(t.total - removed).epsilon(1e-12));
      }
    }
  }

  SUBCASE("gradient matches finite differences") {
    Image p = pred;
    // Residuals bounded away from zero keep the L1 term smooth under the step.
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (std::abs(p.data[i] - gt.data[i]) < 0.01) p.data[i] = gt.data[i] + 0.05;
    }
    check_fd([&](const Image& x) {
      const TotalLoss t = total_loss(x, gt, defaults);
      return LossValue{t.total, t.grad};
    }, p, 1e-6, 1e-3, 1e-9);
  }

  SUBCASE("invalid weights") {
    CHECK_THROWS_AS(total_loss(pred, gt, LossWeights{-0.1, 0.4, 0.4}), ValidationError);
    CHECK_THROWS_AS(total_loss(pred, gt, LossWeights{0.6, std::nan(""), 0.4}), ValidationError);
  }
}

TEST_CASE("PSNR closed forms and monotonicity") {
  Rng rng(6);
  const Image gt = random_image(rng, 16, 16, 3, 0.2, 0.8);
  CHECK(metric_psnr(gt, gt) == 100.0);
  CHECK(metric_psnr(gt, gt, 60.0) == 60.0);
  Image off = gt;
  for (std::size_t i = 0; i < off.size(); ++i) off.data[i] += (i % 2 ? 0.1 : -0.1);
  CHECK(std::abs(metric_psnr(off, gt) - 20.0) <= 1e-9);

  std::vector<double> noise(gt.size());
  for (double& n : noise) n = rng.normal();
  double previous = std::numeric_limits<double>::infinity();
  for (double amp : {0.001, 0.01, 0.05, 0.1, 0.2}) {
    Image noisy = gt;
    for (std::size_t i = 0; i < gt.size(); ++i) noisy.data[i] += amp * noise[i];
    const double p = metric_psnr(noisy, gt);
    CHECK(p < previous);
    previous = p;
  }
  CHECK_THROWS_AS(metric_psnr(Image(2, 2, 3), Image(2, 2, 1)), ShapeError);
}

TEST_CASE("mask IoU") {
  Image a(4, 1, 1), b(4, 1, 1);
  CHECK(mask_iou(a, b) == 1.0);
  a.data = {1, 1, 0, 0};
  b.data = {0, 1, 1, 0};
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == 1.0);
}
