#pragma once

#include <cfenv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"

namespace fskd {

// 8-bit image, HWC layout, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t h_, std::size_t w_, std::size_t c_) : h(h_), w(w_), c(c_), pixels(h_ * w_ * c_, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * w + x) * c + ch]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * w + x) * c + ch]; }

  bool operator==(const ImageU8&) const = default;
};

namespace detail {

inline std::uint8_t quantize_u8(double v) {
  // round half to even, clamp to [0, 255]
  const double r = std::nearbyint(v);
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

}  // namespace detail

// Bilinear interpolation with half-pixel-center sampling (align_corners =
// false) and border replication. Resizing to the identical size reproduces
// the input exactly.
inline ImageU8 bilinear_resize(const ImageU8& src, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw DataError("bilinear_resize: zero output size");
  if (src.h == 0 || src.w == 0 || src.c == 0) throw DataError("bilinear_resize: empty source image");
  ImageU8 dst(out_h, out_w, src.c);
  const double sy = static_cast<double>(src.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(src.w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const double fy0 = std::floor(fy);
    const double wy = fy - fy0;
    const long y0 = std::max(0L, std::min(static_cast<long>(src.h) - 1, static_cast<long>(fy0)));
    const long y1 = std::max(0L, std::min(static_cast<long>(src.h) - 1, static_cast<long>(fy0) + 1));
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const double fx0 = std::floor(fx);
      const double wx = fx - fx0;
      const long x0 = std::max(0L, std::min(static_cast<long>(src.w) - 1, static_cast<long>(fx0)));
      const long x1 = std::max(0L, std::min(static_cast<long>(src.w) - 1, static_cast<long>(fx0) + 1));
      for (std::size_t ch = 0; ch < src.c; ++ch) {
        const double v = (1.0 - wy) * ((1.0 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch)) +
                         wy * ((1.0 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch));
        dst.at(y, x, ch) = detail::quantize_u8(v);
      }
    }
  }
  return dst;
}

// Degrade by bilinear downsampling by `ratio` followed by bilinear upsampling
// back to the original size. Ratio 1 returns the input unchanged.
inline ImageU8 make_lr(const ImageU8& src, unsigned ratio) {
  if (ratio != 1 && ratio != 2 && ratio != 4 && ratio != 8)
    throw DataError("make_lr: ratio must be one of {1,2,4,8}, got " + std::to_string(ratio));
  if (ratio == 1) return src;
  if (src.h % ratio != 0 || src.w % ratio != 0)
    throw DataError("make_lr: image size " + std::to_string(src.h) + "x" + std::to_string(src.w) +
                    " not divisible by ratio " + std::to_string(ratio));
  ImageU8 small = bilinear_resize(src, src.h / ratio, src.w / ratio);
  return bilinear_resize(small, src.h, src.w);
}

inline ImageU8 hflip(const ImageU8& src) {
  ImageU8 dst(src.h, src.w, src.c);
  for (std::size_t y = 0; y < src.h; ++y)
    for (std::size_t x = 0; x < src.w; ++x)
      for (std::size_t ch = 0; ch < src.c; ++ch) dst.at(y, x, ch) = src.at(y, src.w - 1 - x, ch);
  return dst;
}

}  // namespace fskd
