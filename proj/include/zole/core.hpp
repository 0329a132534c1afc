#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace zole {

// Dense row-major 2-D grid of doubles. Disparity maps, loss cotangents and
// gray images all use this layout; invariants that only hold for disparity
// values (finite, nonnegative) are checked at the I/O and pipeline
// boundaries rather than on every construction.
struct Map2D {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Map2D() = default;
  Map2D(int h, int w, double fill = 0.0) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("Map2D: dims must be positive");
    data.assign(static_cast<size_t>(h) * w, fill);
  }

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Map2D& o) const { return height == o.height && width == o.width; }
};

using DisparityMap = Map2D;

// Interleaved row-major image, values in [0,255] at rest (intermediates may
// leave the range until clamped by the producing operation).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0) throw std::invalid_argument("Image: dims must be positive");
    data.assign(static_cast<size_t>(h) * w * c, fill);
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline Map2D to_gray(const Image& img) {
  Map2D out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
      out.at(y, x) = s / img.channels;
    }
  return out;
}

enum class Origin { domain, synthetic };

// Rectified pair. Domain pairs never carry ground truth; held-out truth for
// evaluation roles travels outside the pair.
struct StereoPair {
  Image left;
  Image right;
  Origin origin = Origin::domain;
  std::optional<Map2D> ground_truth;

  static StereoPair domain(Image l, Image r) {
    check_views(l, r);
    StereoPair p;
    p.left = std::move(l);
    p.right = std::move(r);
    p.origin = Origin::domain;
    return p;
  }

  static StereoPair synthetic(Image l, Image r, Map2D gt) {
    check_views(l, r);
    if (gt.height != l.height || gt.width != l.width)
      throw std::invalid_argument("StereoPair: ground truth dims differ from views");
    StereoPair p;
    p.left = std::move(l);
    p.right = std::move(r);
    p.origin = Origin::synthetic;
    p.ground_truth = std::move(gt);
    return p;
  }

  int height() const { return left.height; }
  int width() const { return left.width; }

 private:
  static void check_views(const Image& l, const Image& r) {
    if (!l.same_shape(r)) throw std::invalid_argument("StereoPair: view shapes differ");
    if (l.height <= 0) throw std::invalid_argument("StereoPair: empty views");
  }
};

// Deterministic counter-based generator (splitmix64 stream). The sequence
// depends only on (seed, number of draws), never on platform or library
// version, which is what makes whole-pipeline runs bit-reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive.
  int next_int(int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("Rng::next_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>((static_cast<unsigned __int128>(next_u64()) * span) >> 64);
  }

  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t seed() const { return seed_; }
  uint64_t draws() const { return counter_; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fisher-Yates; every permutation equally likely under the uniform draws.
template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_int(0, static_cast<int>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  shuffle_in_place(idx, rng);
  return idx;
}

// Non-overlapping tiling of an H x W map into p x p patches, row-major in
// both the grid and within each patch.
struct PatchGrid {
  int patch_side = 0;
  int rows = 0;
  int cols = 0;

  int m() const { return patch_side * patch_side; }
  int patch_count() const { return rows * cols; }
};

inline PatchGrid make_patch_grid(int height, int width, int patch_side) {
  if (patch_side <= 0) throw std::invalid_argument("make_patch_grid: patch side must be positive");
  if (height <= 0 || width <= 0) throw std::invalid_argument("make_patch_grid: empty map");
  if (height % patch_side != 0 || width % patch_side != 0)
    throw std::invalid_argument("make_patch_grid: dims " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by patch side " +
                                std::to_string(patch_side));
  return PatchGrid{patch_side, height / patch_side, width / patch_side};
}

inline void check_patch_index(const PatchGrid& grid, int j) {
  if (j < 0 || j >= grid.patch_count())
    throw std::invalid_argument("patch index " + std::to_string(j) + " out of range [0," +
                                std::to_string(grid.patch_count()) + ")");
}

inline std::vector<double> extract_patch(const Map2D& map, const PatchGrid& grid, int j) {
  check_patch_index(grid, j);
  if (map.height != grid.rows * grid.patch_side || map.width != grid.cols * grid.patch_side)
    throw std::invalid_argument("extract_patch: map dims do not match grid");
  const int p = grid.patch_side;
  const int y0 = (j / grid.cols) * p;
  const int x0 = (j % grid.cols) * p;
  std::vector<double> out(static_cast<size_t>(p) * p);
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) out[static_cast<size_t>(y) * p + x] = map.at(y0 + y, x0 + x);
  return out;
}

// Adjoint of extract_patch: adds the patch back into the accumulator so that
// <scatter(patch), map> == <patch, extract(map)>.
inline void scatter_patch_add(Map2D& acc, const PatchGrid& grid, int j,
                              std::span<const double> patch) {
  check_patch_index(grid, j);
  if (acc.height != grid.rows * grid.patch_side || acc.width != grid.cols * grid.patch_side)
    throw std::invalid_argument("scatter_patch_add: map dims do not match grid");
  const int p = grid.patch_side;
  if (patch.size() != static_cast<size_t>(p) * p)
    throw std::invalid_argument("scatter_patch_add: patch length differs from grid patch size");
  const int y0 = (j / grid.cols) * p;
  const int x0 = (j % grid.cols) * p;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) acc.at(y0 + y, x0 + x) += patch[static_cast<size_t>(y) * p + x];
}

inline void check_crop(int h, int w, int y0, int x0, int oh, int ow) {
  if (oh <= 0 || ow <= 0 || y0 < 0 || x0 < 0 || y0 + oh > h || x0 + ow > w)
    throw std::invalid_argument("crop: window " + std::to_string(ow) + "x" + std::to_string(oh) +
                                " at (" + std::to_string(x0) + "," + std::to_string(y0) +
                                ") leaves the " + std::to_string(w) + "x" + std::to_string(h) +
                                " source");
}

inline Map2D crop(const Map2D& m, int y0, int x0, int oh, int ow) {
  check_crop(m.height, m.width, y0, x0, oh, ow);
  Map2D out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) out.at(y, x) = m.at(y0 + y, x0 + x);
  return out;
}

inline Image crop(const Image& img, int y0, int x0, int oh, int ow) {
  check_crop(img.height, img.width, y0, x0, oh, ow);
  Image out(oh, ow, img.channels);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

inline StereoPair crop_pair(const StereoPair& pair, int y0, int x0, int oh, int ow) {
  Image l = crop(pair.left, y0, x0, oh, ow);
  Image r = crop(pair.right, y0, x0, oh, ow);
  if (pair.origin == Origin::synthetic)
    return StereoPair::synthetic(std::move(l), std::move(r),
                                 crop(*pair.ground_truth, y0, x0, oh, ow));
  return StereoPair::domain(std::move(l), std::move(r));
}

}  // namespace zole
