#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "zole/core.hpp"

namespace zole {

// ---------------------------------------------------------------------------
// PFM (portable float map).
//
// Header: "Pf" (1 band) or "PF" (3 bands), then "<width> <height>", then a
// scale whose sign encodes byte order (negative = little-endian), each
// terminated by a single whitespace byte. Payload is 32-bit floats, rows
// stored bottom-to-top.
// ---------------------------------------------------------------------------

struct PfmFile {
  int height = 0;
  int width = 0;
  int channels = 0;       // 1 or 3
  std::vector<double> data;  // interleaved, top-to-bottom rows

  Map2D as_map() const {
    if (channels != 1) throw std::runtime_error("PFM: expected a single-band file");
    Map2D m(height, width);
    m.data = data;
    return m;
  }
  Image as_image() const {
    Image img(height, width, channels);
    img.data = data;
    return img;
  }
};

namespace detail {

inline std::string pnm_token(std::istream& in, const std::string& path, bool allow_comments) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (allow_comments && c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      c = in.get();
      continue;
    }
    if (!std::isspace(c)) break;
    c = in.get();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  // The terminating whitespace byte doubles as the single separator before a
  // binary payload, so it is consumed here and never re-read.
  if (tok.empty()) throw std::runtime_error(path + ": truncated header");
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& path, bool allow_comments) {
  const std::string tok = pnm_token(in, path, allow_comments);
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed header field '" + tok + "'");
  }
  if (pos != tok.size()) throw std::runtime_error(path + ": malformed header field '" + tok + "'");
  return v;
}

inline void check_dims(int w, int h, int c, const std::string& path) {
  if (w <= 0 || h <= 0) throw std::runtime_error(path + ": non-positive dimensions in header");
  if (static_cast<long long>(w) * h * c > (1LL << 29))
    throw std::runtime_error(path + ": image too large");
}

inline uint32_t bswap32(uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

}  // namespace detail

inline PfmFile read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  const std::string magic = detail::pnm_token(in, path, false);
  int channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw std::runtime_error(path + ": not a PFM file (magic '" + magic + "')");

  const int w = detail::pnm_int(in, path, false);
  const int h = detail::pnm_int(in, path, false);
  detail::check_dims(w, h, channels, path);

  const std::string scale_tok = detail::pnm_token(in, path, false);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed scale '" + scale_tok + "'");
  }
  if (scale == 0.0) throw std::runtime_error(path + ": zero scale");
  const bool file_little = scale < 0.0;

  const size_t count = static_cast<size_t>(w) * h * channels;
  std::vector<uint32_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<size_t>(in.gcount()) != count * 4)
    throw std::runtime_error(path + ": truncated payload");

  const bool host_little = (std::endian::native == std::endian::little);
  PfmFile out;
  out.height = h;
  out.width = w;
  out.channels = channels;
  out.data.resize(count);
  const size_t row_elems = static_cast<size_t>(w) * channels;
  for (int y = 0; y < h; ++y) {
    const size_t src_row = static_cast<size_t>(h - 1 - y) * row_elems;  // bottom-to-top
    for (size_t i = 0; i < row_elems; ++i) {
      uint32_t bits = raw[src_row + i];
      if (file_little != host_little) bits = detail::bswap32(bits);
      float f;
      std::memcpy(&f, &bits, 4);
      if (!std::isfinite(f))
        throw std::runtime_error(path + ": non-finite value at row " + std::to_string(y) +
                                 " (invalid-pixel sentinels are not supported)");
      out.data[static_cast<size_t>(y) * row_elems + i] = static_cast<double>(f);
    }
  }
  return out;
}

inline void write_pfm_raw(const std::string& path, const double* data, int h, int w, int channels,
                          bool big_endian = false) {
  if (channels != 1 && channels != 3)
    throw std::runtime_error(path + ": PFM supports 1 or 3 bands");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << (channels == 1 ? "Pf" : "PF") << "\n" << w << " " << h << "\n"
      << (big_endian ? "1.0" : "-1.0") << "\n";
  const bool host_little = (std::endian::native == std::endian::little);
  const size_t row_elems = static_cast<size_t>(w) * channels;
  std::vector<uint32_t> row(row_elems);
  for (int y = h - 1; y >= 0; --y) {
    const double* src = data + static_cast<size_t>(y) * row_elems;
    for (size_t i = 0; i < row_elems; ++i) {
      const float f = static_cast<float>(src[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      if (big_endian == host_little) bits = detail::bswap32(bits);
      row[i] = bits;
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row_elems * 4));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_pfm(const std::string& path, const Map2D& m, bool big_endian = false) {
  write_pfm_raw(path, m.data.data(), m.height, m.width, 1, big_endian);
}

inline void write_pfm(const std::string& path, const Image& img, bool big_endian = false) {
  write_pfm_raw(path, img.data.data(), img.height, img.width, img.channels, big_endian);
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6), maxval 255 only.
// ---------------------------------------------------------------------------

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  const std::string magic = detail::pnm_token(in, path, true);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw std::runtime_error(path + ": not a binary PGM/PPM (magic '" + magic + "')");
  const int w = detail::pnm_int(in, path, true);
  const int h = detail::pnm_int(in, path, true);
  const int maxval = detail::pnm_int(in, path, true);
  detail::check_dims(w, h, channels, path);
  if (maxval != 255)
    throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval));

  const size_t count = static_cast<size_t>(w) * h * channels;
  std::vector<unsigned char> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count)
    throw std::runtime_error(path + ": truncated payload");

  Image img(h, w, channels);
  for (size_t i = 0; i < count; ++i) img.data[i] = static_cast<double>(raw[i]);
  return img;
}

inline void write_pnm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::runtime_error(path + ": PGM/PPM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    const double v = std::lround(img.data[i]);
    raw[i] = static_cast<unsigned char>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline Image read_pgm(const std::string& path) {
  Image img = read_pnm(path);
  if (img.channels != 1) throw std::runtime_error(path + ": expected a single-channel PGM");
  return img;
}

inline Image read_ppm(const std::string& path) {
  Image img = read_pnm(path);
  if (img.channels != 3) throw std::runtime_error(path + ": expected a 3-channel PPM");
  return img;
}

inline void write_pgm(const std::string& path, const Image& img) {
  if (img.channels != 1) throw std::runtime_error(path + ": PGM needs a single channel");
  write_pnm(path, img);
}

inline void write_ppm(const std::string& path, const Image& img) {
  if (img.channels != 3) throw std::runtime_error(path + ": PPM needs 3 channels");
  write_pnm(path, img);
}

// ---------------------------------------------------------------------------
// Corner-aligned bilinear resampling. Source coordinate for output index i is
// i*(in-1)/(out-1), so the four corners map exactly and samples never leave
// the grid. Each output value is clamped to the range of its four taps, which
// pins down the maximum principle even under rounding.
// ---------------------------------------------------------------------------

namespace detail {

inline void resize_plane(const double* src, int h, int w, double* dst, int oh, int ow,
                         size_t src_stride, size_t dst_stride) {
  const double sy_step = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx_step = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    double sy = oy * sy_step;
    if (sy > h - 1) sy = h - 1;
    int y0 = static_cast<int>(sy);
    if (y0 > h - 2) y0 = h > 1 ? h - 2 : 0;
    const double fy = h > 1 ? sy - y0 : 0.0;
    const int y1 = h > 1 ? y0 + 1 : 0;
    for (int ox = 0; ox < ow; ++ox) {
      double sx = ox * sx_step;
      if (sx > w - 1) sx = w - 1;
      int x0 = static_cast<int>(sx);
      if (x0 > w - 2) x0 = w > 1 ? w - 2 : 0;
      const double fx = w > 1 ? sx - x0 : 0.0;
      const int x1 = w > 1 ? x0 + 1 : 0;
      const double v00 = src[(static_cast<size_t>(y0) * w + x0) * src_stride];
      const double v01 = src[(static_cast<size_t>(y0) * w + x1) * src_stride];
      const double v10 = src[(static_cast<size_t>(y1) * w + x0) * src_stride];
      const double v11 = src[(static_cast<size_t>(y1) * w + x1) * src_stride];
      double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
      const double lo = std::min(std::min(v00, v01), std::min(v10, v11));
      const double hi = std::max(std::max(v00, v01), std::max(v10, v11));
      if (v < lo) v = lo;
      if (v > hi) v = hi;
      dst[(static_cast<size_t>(oy) * ow + ox) * dst_stride] = v;
    }
  }
}

inline int scaled_dim(int d, double r) {
  const long v = std::lround(r * d);
  return v < 1 ? 1 : static_cast<int>(v);
}

}  // namespace detail

inline Map2D resize_to(const Map2D& m, int oh, int ow) {
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("resize_to: non-positive output dims");
  Map2D out(oh, ow);
  detail::resize_plane(m.data.data(), m.height, m.width, out.data.data(), oh, ow, 1, 1);
  return out;
}

inline Image resize_to(const Image& img, int oh, int ow) {
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("resize_to: non-positive output dims");
  Image out(oh, ow, img.channels);
  for (int c = 0; c < img.channels; ++c)
    detail::resize_plane(img.data.data() + c, img.height, img.width, out.data.data() + c, oh, ow,
                         static_cast<size_t>(img.channels), static_cast<size_t>(img.channels));
  return out;
}

// Output dims are round(r*dim). Resampling changes the grid only; disparity
// VALUES are not rescaled here, callers own the 1/r factor.
inline Map2D resize_bilinear(const Map2D& m, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("resize_bilinear: scale must be positive");
  return resize_to(m, detail::scaled_dim(m.height, r), detail::scaled_dim(m.width, r));
}

inline Image resize_bilinear(const Image& img, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("resize_bilinear: scale must be positive");
  return resize_to(img, detail::scaled_dim(img.height, r), detail::scaled_dim(img.width, r));
}

}  // namespace zole
