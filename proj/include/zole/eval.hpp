#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "zole/core.hpp"

namespace zole {

// Mean absolute disparity error over the masked pixels (all pixels when no
// mask is given; mask counts a pixel where it is nonzero).
inline double epe(const Map2D& pred, const Map2D& gt, const Map2D* mask = nullptr) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("epe: shape mismatch");
  if (mask && !mask->same_shape(pred)) throw std::invalid_argument("epe: mask shape mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (mask && mask->data[i] == 0.0) continue;
    acc += std::abs(pred.data[i] - gt.data[i]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("epe: empty mask");
  return acc / static_cast<double>(n);
}

// Percentage of masked pixels whose absolute disparity error is strictly
// greater than 3; an error of exactly 3.0 counts as correct.
inline double three_pixel_error(const Map2D& pred, const Map2D& gt, const Map2D* mask = nullptr) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("three_pixel_error: shape mismatch");
  if (mask && !mask->same_shape(pred))
    throw std::invalid_argument("three_pixel_error: mask shape mismatch");
  size_t bad = 0, n = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (mask && mask->data[i] == 0.0) continue;
    if (std::abs(pred.data[i] - gt.data[i]) > 3.0) ++bad;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("three_pixel_error: empty mask");
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

// Resample the right view at x - d(y,x) with linear interpolation along the
// scanline. mask is 1 where the source column lies inside the image and 0
// elsewhere; masked-out pixels of the warp are left at 0.
struct WarpResult {
  Image image;
  Map2D mask;
};

inline WarpResult warp_right_to_left(const Image& right, const Map2D& disparity) {
  if (right.height != disparity.height || right.width != disparity.width)
    throw std::invalid_argument("warp_right_to_left: shape mismatch");
  const int h = right.height, w = right.width, c = right.channels;
  WarpResult r;
  r.image = Image(h, w, c);
  r.mask = Map2D(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x - disparity.at(y, x);
      if (!(sx >= 0.0 && sx <= static_cast<double>(w - 1))) continue;
      r.mask.at(y, x) = 1.0;
      int x0 = static_cast<int>(std::floor(sx));
      if (x0 >= w - 1) x0 = w - 1;
      const double t = sx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double v0 = right.at(y, x0, ch);
        const double v1 = x0 + 1 < w ? right.at(y, x0 + 1, ch) : v0;
        r.image.at(y, x, ch) = (1.0 - t) * v0 + t * v1;
      }
    }
  }
  return r;
}

// Peak signal-to-noise ratio against a 255 peak, restricted to pixels where
// mask is nonzero when given. A zero-error comparison reports 99 dB.
inline double psnr(const Image& a, const Image& b, const Map2D* mask = nullptr) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::invalid_argument("psnr: shape mismatch");
  if (mask && (mask->height != a.height || mask->width != a.width))
    throw std::invalid_argument("psnr: mask shape mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask && mask->at(y, x) == 0.0) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        acc += d * d;
      }
      n += static_cast<size_t>(a.channels);
    }
  }
  if (n == 0) throw std::invalid_argument("psnr: empty mask");
  const double mse = acc / static_cast<double>(n);
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

inline double warp_psnr(const StereoPair& pair, const Map2D& disparity) {
  const WarpResult w = warp_right_to_left(pair.right, disparity);
  return psnr(w.image, pair.left, &w.mask);
}

// Mean structural similarity over all fully interior 11x11 windows, Gaussian
// weighted (sigma 1.5), averaged across channels. Constants follow the usual
// K1 = 0.01, K2 = 0.03 convention with a 255 dynamic range.
inline double ssim(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::invalid_argument("ssim: shape mismatch");
  constexpr int kWin = 11, kHalf = 5;
  if (a.height < kWin || a.width < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double g[kWin];
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kHalf;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    double acc = 0.0;
    size_t n = 0;
    for (int cy = kHalf; cy < a.height - kHalf; ++cy) {
      for (int cx = kHalf; cx < a.width - kHalf; ++cx) {
        double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
        for (int dy = -kHalf; dy <= kHalf; ++dy) {
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            const double wgt = g[dy + kHalf] * g[dx + kHalf];
            const double va = a.at(cy + dy, cx + dx, ch);
            const double vb = b.at(cy + dy, cx + dx, ch);
            mx += wgt * va;
            my += wgt * vb;
            mxx += wgt * va * va;
            myy += wgt * vb * vb;
            mxy += wgt * (va * vb);
          }
        }
        const double vx = mxx - mx * mx;
        const double vy = myy - my * my;
        const double cov = mxy - mx * my;
        acc += ((2.0 * (mx * my) + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++n;
      }
    }
    total += acc / static_cast<double>(n);
  }
  return total / static_cast<double>(a.channels);
}

}  // namespace zole
