#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "zole/core.hpp"

namespace zole {

// Procedural stereo scenes: a textured background plane plus a handful of
// textured rectangles and ellipses floating in front of it. Every surface
// has a constant disparity drawn as a whole number of pixels, textures are
// quantized to whole intensities, and the right view reuses the exact
// left-view texture values, so generated pairs are photo-consistent down to
// the byte both in memory and after a round trip through 8-bit image files.

struct SceneSpec {
  int height = 160;
  int width = 160;
  int num_shapes = 5;
  double disp_lo = 2.0;  // background sits exactly here
  double disp_hi = 9.0;
  double texture_scale = 18.0;  // rough texture wavelength in pixels
  uint64_t seed = 0;
};

struct TextureWave {
  double fx = 0.0, fy = 0.0, amp = 0.0;
  std::array<double, 3> phase{};
};

struct Texture {
  double base = 128.0;
  std::array<TextureWave, 3> waves{};

  double eval(int channel, double x, double y) const {
    double v = base;
    for (const auto& w : waves)
      v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase[static_cast<size_t>(channel)]);
    return v;
  }
};

struct SceneShape {
  enum class Kind { rectangle, ellipse };
  Kind kind = Kind::rectangle;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rectangle bounds
  double cx = 0, cy = 0, rx = 0, ry = 0;  // ellipse center and radii
  double disparity = 0;
  Texture texture;

  bool contains(double x, double y) const {
    if (kind == Kind::rectangle) return x >= x0 && x < x1 && y >= y0 && y < y1;
    const double nx = (x - cx) / rx, ny = (y - cy) / ry;
    return nx * nx + ny * ny <= 1.0;
  }
};

// Shapes are stored back to front; the last one containing a point wins.
struct Scene {
  int height = 0, width = 0;
  double background_disparity = 0.0;
  Texture background;
  std::vector<SceneShape> shapes;

  int topmost_at(double x, double y) const {
    for (int s = static_cast<int>(shapes.size()) - 1; s >= 0; --s)
      if (shapes[static_cast<size_t>(s)].contains(x, y)) return s;
    return -1;
  }
};

namespace detail {

inline double quantize_intensity(double v) {
  return std::clamp(static_cast<double>(std::lround(v)), 0.0, 255.0);
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.next_double(); }

inline Texture sample_texture(Rng& rng, double scale) {
  Texture t;
  t.base = uniform(rng, 100.0, 160.0);
  for (auto& w : t.waves) {
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double wavelength = scale * uniform(rng, 0.6, 1.6);
    const double f = 2.0 * std::numbers::pi / wavelength;
    w.fx = f * std::cos(theta);
    w.fy = f * std::sin(theta);
    w.amp = uniform(rng, 16.0, 40.0);
    for (double& p : w.phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return t;
}

}  // namespace detail

// Draw order: background texture, all shape disparities (then sorted so the
// topmost shape is also the closest), then per shape its kind, geometry, and
// texture.
inline Scene sample_scene(const SceneSpec& spec, Rng& rng) {
  if (spec.height < 8 || spec.width < 8) throw std::invalid_argument("sample_scene: scene too small");
  if (spec.num_shapes < 0) throw std::invalid_argument("sample_scene: negative shape count");
  if (spec.disp_lo < 0.0) throw std::invalid_argument("sample_scene: negative disparity");
  if (spec.disp_hi >= spec.width)
    throw std::invalid_argument("sample_scene: disparity range reaches past the image width");
  const long dlo = std::lround(std::ceil(spec.disp_lo));
  const long dhi = std::lround(std::floor(spec.disp_hi));
  if (dlo > dhi) throw std::invalid_argument("sample_scene: disparity range holds no whole number");
  if (spec.texture_scale <= 0.0) throw std::invalid_argument("sample_scene: texture scale must be positive");

  Scene scene;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.background_disparity = spec.disp_lo;
  scene.background = detail::sample_texture(rng, spec.texture_scale);

  std::vector<double> disp(static_cast<size_t>(spec.num_shapes));
  for (double& d : disp)
    d = static_cast<double>(rng.next_int(static_cast<int>(dlo), static_cast<int>(dhi)));
  std::sort(disp.begin(), disp.end());

  const double dim = static_cast<double>(std::min(spec.height, spec.width));
  for (int i = 0; i < spec.num_shapes; ++i) {
    SceneShape s;
    s.kind = rng.next_int(0, 1) == 0 ? SceneShape::Kind::rectangle : SceneShape::Kind::ellipse;
    const double hx = detail::uniform(rng, 0.10, 0.22) * dim;
    const double hy = detail::uniform(rng, 0.10, 0.22) * dim;
    const double cx = detail::uniform(rng, hx, spec.width - 1 - hx);
    const double cy = detail::uniform(rng, hy, spec.height - 1 - hy);
    if (s.kind == SceneShape::Kind::rectangle) {
      s.x0 = cx - hx;
      s.x1 = cx + hx;
      s.y0 = cy - hy;
      s.y1 = cy + hy;
    } else {
      s.cx = cx;
      s.cy = cy;
      s.rx = hx;
      s.ry = hy;
    }
    s.disparity = disp[static_cast<size_t>(i)];
    s.texture = detail::sample_texture(rng, spec.texture_scale);
    scene.shapes.push_back(std::move(s));
  }
  return scene;
}

// Left view and ground truth come straight from the topmost surface. A right
// pixel shows the topmost shape whose left-view position both lies on the
// shape and is not covered by anything closer; gaps occluded in the left
// view fall back to background texture. The occlusion mask is 1 at left
// pixels whose surface point is not visible in the right view.
struct SceneSample {
  StereoPair pair;
  Map2D occlusion;
};

inline SceneSample render_scene_pair(const Scene& scene) {
  const int h = scene.height, w = scene.width;
  Image left(h, w, 3), right(h, w, 3);
  Map2D gt(h, w), occl(h, w);
  std::vector<int> right_winner(static_cast<size_t>(h) * w, -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int s = scene.topmost_at(x, y);
      const Texture& tex = s < 0 ? scene.background : scene.shapes[static_cast<size_t>(s)].texture;
      gt.at(y, x) = s < 0 ? scene.background_disparity : scene.shapes[static_cast<size_t>(s)].disparity;
      for (int ch = 0; ch < 3; ++ch)
        left.at(y, x, ch) = detail::quantize_intensity(tex.eval(ch, x, y));
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int xr = 0; xr < w; ++xr) {
      int winner = -1;
      for (int s = static_cast<int>(scene.shapes.size()) - 1; s >= 0; --s) {
        const double xl = xr + scene.shapes[static_cast<size_t>(s)].disparity;
        if (scene.topmost_at(xl, y) == s) {
          winner = s;
          break;
        }
      }
      right_winner[static_cast<size_t>(y) * w + xr] = winner;
      if (winner >= 0) {
        const SceneShape& s = scene.shapes[static_cast<size_t>(winner)];
        for (int ch = 0; ch < 3; ++ch)
          right.at(y, xr, ch) = detail::quantize_intensity(s.texture.eval(ch, xr + s.disparity, y));
      } else {
        for (int ch = 0; ch < 3; ++ch)
          right.at(y, xr, ch) = detail::quantize_intensity(
              scene.background.eval(ch, xr + scene.background_disparity, y));
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int s = scene.topmost_at(x, y);
      const int xr = x - static_cast<int>(std::lround(gt.at(y, x)));
      const bool visible =
          xr >= 0 && xr < w && right_winner[static_cast<size_t>(y) * w + xr] == s;
      occl.at(y, x) = visible ? 0.0 : 1.0;
    }
  }
  return {StereoPair::synthetic(std::move(left), std::move(right), std::move(gt)), std::move(occl)};
}

inline SceneSample generate_scene(const SceneSpec& spec) {
  Rng rng(spec.seed);
  return render_scene_pair(sample_scene(spec, rng));
}

namespace detail {

// Resample rows at y + v for a sub-pixel downward shift; the last row clamps.
inline Image shift_rows(const Image& img, double v) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y) {
    const double sy = std::min(y + v, static_cast<double>(img.height - 1));
    const int y0 = std::min(static_cast<int>(std::floor(sy)), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double t = sy - y0;
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = (1.0 - t) * img.at(y0, x, c) + t * img.at(y1, x, c);
  }
  return out;
}

}  // namespace detail

// Camera-style corruption used for the target domain. Per view: additive
// Gaussian noise with sigma drawn from noise_sigmas, a per-channel gain
// drawn from brightness_factors, then gamma 1 + delta with delta uniform in
// [-gamma_delta, gamma_delta]; the right view is additionally shifted down
// by a sub-pixel amount drawn uniformly from [0, v_shift]. Ground truth does
// not survive degradation, so the result is always a domain pair.
struct DomainDegradation {
  std::vector<double> noise_sigmas{10.0, 15.0};
  std::vector<double> brightness_factors{0.8, 1.2};
  double gamma_delta = 0.15;
  double v_shift = 0.75;
};

// Draw order: left (sigma, gain r, gain g, gain b, delta), right (the same
// five), shift v, then left noise in y/x/channel order (skipped when that
// view's sigma is 0), then right noise.
inline StereoPair apply_degradation(const StereoPair& clean, const DomainDegradation& deg,
                                    Rng& rng) {
  if (deg.noise_sigmas.empty() || deg.brightness_factors.empty())
    throw std::invalid_argument("apply_degradation: empty draw set");
  struct Params {
    double sigma = 0, gain[3] = {1, 1, 1}, gamma = 1;
  };
  auto draw_params = [&]() {
    Params p;
    p.sigma = deg.noise_sigmas[static_cast<size_t>(
        rng.next_int(0, static_cast<int>(deg.noise_sigmas.size()) - 1))];
    for (double& g : p.gain)
      g = deg.brightness_factors[static_cast<size_t>(
          rng.next_int(0, static_cast<int>(deg.brightness_factors.size()) - 1))];
    p.gamma = 1.0 + (rng.next_double() * 2.0 - 1.0) * deg.gamma_delta;
    return p;
  };
  const Params pl = draw_params();
  const Params pr = draw_params();
  const double v = deg.v_shift * rng.next_double();

  auto photometric = [&rng](const Image& src, const Params& p) {
    Image out(src.height, src.width, src.channels);
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        for (int c = 0; c < src.channels; ++c) {
          double val = src.at(y, x, c);
          if (p.sigma > 0.0) val += p.sigma * rng.next_gaussian();
          val = std::clamp(val * p.gain[c], 0.0, 255.0);
          out.at(y, x, c) = 255.0 * std::pow(val / 255.0, p.gamma);
        }
    return out;
  };
  Image left = photometric(clean.left, pl);
  Image right = detail::shift_rows(photometric(clean.right, pr), v);
  for (double& x : left.data) x = detail::quantize_intensity(x);
  for (double& x : right.data) x = detail::quantize_intensity(x);
  return StereoPair::domain(std::move(left), std::move(right));
}

// Lighter corruption for labeled examples during training: per view a sigma
// from {0, 10, 15} and per-channel gains from {0.8, 1.0, 1.2}, applied as
// noise then gain then clamp. Ground truth is carried over untouched.
//
// Draw order: left (sigma, gains), right (sigma, gains), left noise in
// y/x/channel order if that sigma is nonzero, then right noise.
inline StereoPair augment_synthetic(const StereoPair& clean, Rng& rng) {
  if (clean.origin != Origin::synthetic)
    throw std::invalid_argument("augment_synthetic: needs a labeled synthetic pair");
  struct Params {
    double sigma = 0, gain[3] = {1, 1, 1};
  };
  auto draw_params = [&rng]() {
    Params p;
    const int si = rng.next_int(0, 2);
    p.sigma = si == 0 ? 0.0 : (si == 1 ? 10.0 : 15.0);
    for (double& g : p.gain) {
      const int gi = rng.next_int(0, 2);
      g = gi == 0 ? 0.8 : (gi == 1 ? 1.0 : 1.2);
    }
    return p;
  };
  const Params pl = draw_params();
  const Params pr = draw_params();
  auto apply = [&rng](const Image& src, const Params& p) {
    Image out(src.height, src.width, src.channels);
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        for (int c = 0; c < src.channels; ++c) {
          double val = src.at(y, x, c);
          if (p.sigma > 0.0) val += p.sigma * rng.next_gaussian();
          out.at(y, x, c) = std::clamp(val * p.gain[c], 0.0, 255.0);
        }
    return out;
  };
  Image left = apply(clean.left, pl);
  Image right = apply(clean.right, pr);
  return StereoPair::synthetic(std::move(left), std::move(right), *clean.ground_truth);
}

}  // namespace zole
