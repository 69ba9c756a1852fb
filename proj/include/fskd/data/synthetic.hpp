#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fskd/core/random.hpp"
#include "fskd/data/dataset.hpp"
#include "fskd/data/image.hpp"

namespace fskd {

// Procedural digit renderer: stroke skeletons per glyph, randomized pose,
// stroke width, contrast, background gradient and pixel noise. Used for the
// desk-scale digit-classification benchmark and as a test fixture.
struct DigitStyle {
  double stroke_min = 1.2, stroke_max = 2.3;  // px at size 32, scaled with size
  double noise_sigma = 14.0;
  double rotation_deg = 11.0;
  double scale_min = 0.75, scale_max = 1.06;
  double shear = 0.10;
  double translate = 0.06;     // fraction of the canvas
  double point_jitter = 0.022;  // fraction of the unit glyph box
  double distractor_prob = 0.3;
};

namespace detail {

struct Pt {
  double x, y;
};
using Polyline = std::vector<Pt>;

inline void add_arc(Polyline& p, double cx, double cy, double rx, double ry, double a0_deg, double a1_deg,
                    int segments = 28) {
  for (int i = 0; i <= segments; ++i) {
    const double a = (a0_deg + (a1_deg - a0_deg) * i / segments) * M_PI / 180.0;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

inline Polyline arc(double cx, double cy, double rx, double ry, double a0, double a1, int segments = 28) {
  Polyline p;
  add_arc(p, cx, cy, rx, ry, a0, a1, segments);
  return p;
}

// Unit-box skeletons, y pointing down.
inline std::vector<Polyline> digit_strokes(int digit) {
  switch (digit) {
    case 0:
      return {arc(0.50, 0.50, 0.27, 0.40, 0.0, 360.0, 40)};
    case 1:
      return {{{0.32, 0.24}, {0.54, 0.08}, {0.54, 0.92}}};
    case 2: {
      Polyline top = arc(0.50, 0.30, 0.27, 0.22, 180.0, 395.0);
      top.push_back({0.24, 0.90});
      return {top, {{0.24, 0.90}, {0.79, 0.90}}};
    }
    case 3:
      return {arc(0.49, 0.29, 0.25, 0.21, 235.0, 480.0), arc(0.49, 0.70, 0.27, 0.23, 250.0, 495.0)};
    case 4:
      return {{{0.58, 0.10}, {0.20, 0.60}, {0.85, 0.60}}, {{0.66, 0.26}, {0.66, 0.92}}};
    case 5: {
      Polyline body{{0.74, 0.10}, {0.30, 0.10}, {0.27, 0.46}};
      add_arc(body, 0.47, 0.66, 0.27, 0.24, 255.0, 480.0);
      return {body};
    }
    case 6:
      return {{{0.68, 0.08}, {0.48, 0.26}, {0.31, 0.48}, {0.25, 0.66}}, arc(0.49, 0.67, 0.25, 0.24, 0.0, 360.0, 36)};
    case 7:
      return {{{0.20, 0.10}, {0.80, 0.10}, {0.40, 0.92}}};
    case 8:
      return {arc(0.50, 0.29, 0.22, 0.20, 0.0, 360.0, 36), arc(0.50, 0.70, 0.26, 0.23, 0.0, 360.0, 36)};
    case 9:
      return {arc(0.51, 0.33, 0.24, 0.23, 0.0, 360.0, 36), {{0.74, 0.36}, {0.70, 0.62}, {0.58, 0.82}, {0.45, 0.92}}};
    default:
      throw DataError("digit_strokes: digit out of range");
  }
}

inline double dist_to_segment(double px, double py, const Pt& a, const Pt& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

inline double dist_to_polylines(double px, double py, const std::vector<Polyline>& strokes) {
  double d = 1e30;
  for (const auto& line : strokes)
    for (std::size_t i = 0; i + 1 < line.size(); ++i) d = std::min(d, dist_to_segment(px, py, line[i], line[i + 1]));
  return d;
}

}  // namespace detail

inline ImageU8 render_digit(int digit, std::size_t size, std::uint64_t sample_seed, const DigitStyle& style = {}) {
  Rng rng(sample_seed);
  auto strokes = detail::digit_strokes(digit);

  const double rot = rng.uniform(-style.rotation_deg, style.rotation_deg) * M_PI / 180.0;
  const double scale = rng.uniform(style.scale_min, style.scale_max);
  const double shear = rng.uniform(-style.shear, style.shear);
  const double tx = rng.uniform(-style.translate, style.translate);
  const double ty = rng.uniform(-style.translate, style.translate);
  const double cr = std::cos(rot), sr = std::sin(rot);
  const double px_scale = static_cast<double>(size);

  for (auto& line : strokes)
    for (auto& p : line) {
      double x = p.x - 0.5, y = p.y - 0.5;
      x += shear * y;
      const double xr = scale * (cr * x - sr * y);
      const double yr = scale * (sr * x + cr * y);
      x = xr + 0.5 + tx + rng.uniform(-style.point_jitter, style.point_jitter);
      y = yr + 0.5 + ty + rng.uniform(-style.point_jitter, style.point_jitter);
      p = {x * px_scale, y * px_scale};
    }

  const double width = rng.uniform(style.stroke_min, style.stroke_max) * px_scale / 32.0;
  const double ink = rng.uniform(150.0, 255.0);
  const double bg = rng.uniform(0.0, 55.0);
  const double gx = rng.uniform(-28.0, 28.0), gy = rng.uniform(-28.0, 28.0);

  const bool has_distractor = rng.uniform(0.0, 1.0) < style.distractor_prob;
  detail::Polyline distractor;
  double d_ink = 0.0, d_width = 1.0;
  if (has_distractor) {
    distractor = {{rng.uniform(0.0, px_scale), rng.uniform(0.0, px_scale)},
                  {rng.uniform(0.0, px_scale), rng.uniform(0.0, px_scale)}};
    d_ink = rng.uniform(45.0, 110.0);
    d_width = rng.uniform(0.6, 1.4) * px_scale / 32.0;
  }

  const double aa = 0.65 * px_scale / 32.0;
  ImageU8 img(size, size, 1);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      double v = bg + gx * (cx / px_scale) + gy * (cy / px_scale);
      v = std::max(0.0, v);
      if (has_distractor) {
        const double dd = detail::dist_to_segment(cx, cy, distractor[0], distractor[1]);
        const double cov = std::clamp((d_width / 2.0 + aa - dd) / (2.0 * aa), 0.0, 1.0);
        v += (d_ink - v) * cov;
      }
      const double d = detail::dist_to_polylines(cx, cy, strokes);
      const double cov = std::clamp((width / 2.0 + aa - d) / (2.0 * aa), 0.0, 1.0);
      v += (ink - v) * cov;
      v += rng.normal(0.0, style.noise_sigma);
      img.at(y, x, 0) = detail::quantize_u8(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

// Balanced 10-class set: sample i is digit i % 10, deterministic in (seed, i).
inline Dataset make_digit_dataset(std::size_t count, std::size_t size, std::uint64_t seed,
                                  const DigitStyle& style = {}) {
  Dataset ds;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ImageSample s;
    s.label = static_cast<int>(i % 10);
    s.image = render_digit(s.label, size, mix_seed(seed, i), style);
    s.id = "synth" + std::to_string(i);
    ds.samples.push_back(std::move(s));
  }
  ds.finalize();
  return ds;
}

}  // namespace fskd
