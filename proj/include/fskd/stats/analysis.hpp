#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/data/batch.hpp"
#include "fskd/data/dataset.hpp"
#include "fskd/model/backbone.hpp"
#include "fskd/stats/pearson.hpp"
#include "fskd/stats/ttest.hpp"

namespace fskd {
namespace stats {

namespace detail {

// Eval-mode forward over the dataset at a degradation ratio, handing each
// batch's tap list to the sink. Batches keep dataset order.
template <typename Fn>
inline void scan_taps(Backbone& model, const Dataset& ds, unsigned ratio, std::size_t limit, Fn&& sink,
                      std::size_t batch_size = 64, double mean = 0.5, double stddev = 0.5) {
  if (ds.empty()) throw DataError("tap scan: empty dataset");
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  NoGradScope ng;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    std::vector<ImageU8> lr;
    std::vector<const ImageU8*> ptrs;
    for (std::size_t i = begin; i < end; ++i) lr.push_back(make_lr(ds.samples[i].image, ratio));
    for (const auto& im : lr) ptrs.push_back(&im);
    auto result = model.forward_with_taps(standardize_images(ptrs, mean, stddev), false);
    sink(result.taps, end - begin);
  }
}

}  // namespace detail

// Per-sample L2 norm of the flattened tap `block` (0-based), eval mode.
inline std::vector<double> norm_distribution(Backbone& model, const Dataset& ds, unsigned ratio, std::size_t block,
                                             std::size_t limit = 0) {
  if (block >= model.config().num_blocks())
    throw ConfigError("norm_distribution: block " + std::to_string(block) + " out of range, model has " +
                      std::to_string(model.config().num_blocks()));
  std::vector<double> norms;
  detail::scan_taps(model, ds, ratio, limit, [&](const std::vector<Tensor>& taps, std::size_t batch_n) {
    const Tensor& tap = taps[block];
    const std::size_t k = tap.size() / tap.dim(0);
    for (std::size_t i = 0; i < batch_n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += tap.data()[i * k + j] * tap.data()[i * k + j];
      norms.push_back(std::sqrt(s));
    }
  });
  return norms;
}

struct CorrelationReport {
  std::vector<double> r;               // one per block
  std::vector<std::size_t> block_ids;  // 1-based, matching the B{i} convention
  std::size_t sample_count = 0;        // images scanned
};

// Pearson correlation between co-indexed teacher-on-HR and student-on-LR
// feature values, one coefficient per block. Features are L2-normalized per
// sample first so the statistic measures direction; `normalize = false`
// correlates raw activations instead.
inline CorrelationReport pixel_correlation(Backbone& teacher, Backbone& student, const Dataset& ds, unsigned ratio,
                                           std::size_t n_images, bool normalize = true) {
  if (!(teacher.config() == student.config()))
    throw ConfigError("pixel_correlation: teacher and student configs differ");
  const std::size_t L = teacher.config().num_blocks();
  std::vector<std::vector<double>> tvals(L), svals(L);

  auto collect = [&](Backbone& model, unsigned r, std::vector<std::vector<double>>& out) {
    detail::scan_taps(model, ds, r, n_images, [&](const std::vector<Tensor>& taps, std::size_t batch_n) {
      for (std::size_t b = 0; b < L; ++b) {
        const Tensor& tap = taps[b];
        const std::size_t k = tap.size() / tap.dim(0);
        for (std::size_t i = 0; i < batch_n; ++i) {
          double inv = 1.0;
          if (normalize) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += tap.data()[i * k + j] * tap.data()[i * k + j];
            inv = 1.0 / std::sqrt(s + kNormEps);
          }
          for (std::size_t j = 0; j < k; ++j) out[b].push_back(tap.data()[i * k + j] * inv);
        }
      }
    });
  };
  collect(teacher, 1, tvals);
  collect(student, ratio, svals);

  CorrelationReport report;
  report.sample_count = n_images == 0 ? ds.size() : std::min(n_images, ds.size());
  for (std::size_t b = 0; b < L; ++b) {
    report.r.push_back(pearson_r(tvals[b], svals[b]));
    report.block_ids.push_back(b + 1);
  }
  return report;
}

struct AttentionMap {
  std::size_t h = 0, w = 0;
  std::vector<double> values;  // in [0,1]
};

// Channel-wise average pooling followed by min-max normalization to [0,1].
// A constant map has no range; it renders as all 0.5.
inline AttentionMap attention_map(const Tensor& tap) {
  Shape s = tap.shape();
  std::size_t C, H, W, offset = 0;
  if (s.size() == 3) {
    C = s[0];
    H = s[1];
    W = s[2];
  } else if (s.size() == 4 && s[0] == 1) {
    C = s[1];
    H = s[2];
    W = s[3];
  } else {
    throw ShapeError("attention_map: need a single sample tap (C,H,W), got " + shape_str(s));
  }
  AttentionMap map;
  map.h = H;
  map.w = W;
  map.values.assign(H * W, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < H * W; ++p) map.values[p] += tap.data()[offset + c * H * W + p];
  for (auto& v : map.values) v /= static_cast<double>(C);
  const auto [mn_it, mx_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx == mn) {
    std::fill(map.values.begin(), map.values.end(), 0.5);
  } else {
    for (auto& v : map.values) v = (v - mn) / (mx - mn);
  }
  return map;
}

inline void write_pgm(const std::string& path, const AttentionMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot create PGM '" + path + "'");
  os << "P5\n" << map.w << " " << map.h << "\n255\n";
  for (double v : map.values) {
    const unsigned char b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw DataError("failed writing PGM '" + path + "'");
}

}  // namespace stats
}  // namespace fskd
