#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fskd/core/parallel.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/data/batch.hpp"
#include "fskd/data/dataset.hpp"
#include "fskd/model/backbone.hpp"
#include "fskd/model/margin_head.hpp"

namespace fskd {

namespace detail {

inline std::vector<double> l2_normalized_row(const Tensor& m, std::size_t row) {
  const std::size_t d = m.dim(1);
  std::vector<double> out(d);
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += m.data()[row * d + j] * m.data()[row * d + j];
  const double inv = 1.0 / std::sqrt(s + kNormEps);
  for (std::size_t j = 0; j < d; ++j) out[j] = m.data()[row * d + j] * inv;
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Eval-mode embeddings of every image at the given degradation ratio,
// L2-normalized. Batches fan out over worker threads; results land in
// per-sample slots so the output is order-independent of the thread count.
inline std::vector<std::vector<double>> embed_images(Backbone& model, const std::vector<const ImageU8*>& images,
                                                     unsigned ratio, std::size_t batch_size = 128, double mean = 0.5,
                                                     double stddev = 0.5) {
  if (images.empty()) throw DataError("embed_images: no images");
  std::vector<std::vector<double>> out(images.size());
  const std::size_t n_batches = (images.size() + batch_size - 1) / batch_size;
  parallel_for_chunks(n_batches, [&](std::size_t, std::size_t b_begin, std::size_t b_end) {
    NoGradScope ng;
    for (std::size_t b = b_begin; b < b_end; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(images.size(), begin + batch_size);
      std::vector<ImageU8> lr;
      std::vector<const ImageU8*> ptrs;
      lr.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) lr.push_back(make_lr(*images[i], ratio));
      for (const auto& im : lr) ptrs.push_back(&im);
      Tensor batch = standardize_images(ptrs, mean, stddev);
      Tensor emb = model.forward_with_taps(batch, false).embedding;
      for (std::size_t i = begin; i < end; ++i) out[i] = detail::l2_normalized_row(emb, i - begin);
    }
  });
  return out;
}

inline std::vector<const ImageU8*> image_pointers(const Dataset& ds) {
  std::vector<const ImageU8*> ptrs;
  ptrs.reserve(ds.size());
  for (const auto& s : ds.samples) ptrs.push_back(&s.image);
  return ptrs;
}

// Closed-set accuracy: argmax over the margin head's cosine logits (margin
// zero at evaluation time).
inline double eval_classification(Backbone& model, const MarginHeadParams& head, const Dataset& ds, unsigned ratio,
                                  std::size_t batch_size = 128, double mean = 0.5, double stddev = 0.5) {
  if (ds.empty()) throw DataError("eval_classification: empty dataset");
  auto embeddings = embed_images(model, image_pointers(ds), ratio, batch_size, mean, stddev);
  // column-normalized W
  const std::size_t d = head.W.dim(0), n = head.W.dim(1);
  std::vector<std::vector<double>> w_cols(n, std::vector<double>(d));
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += head.W.data()[k * n + j] * head.W.data()[k * n + j];
    const double inv = 1.0 / std::sqrt(s + kNormEps);
    for (std::size_t k = 0; k < d; ++k) w_cols[j][k] = head.W.data()[k * n + j] * inv;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    double best_score = -1e30;
    for (std::size_t j = 0; j < n; ++j) {
      const double score = detail::dot(embeddings[i], w_cols[j]);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (static_cast<int>(best) == ds.samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

inline double accuracy_at_threshold(const std::vector<double>& scores, const std::vector<bool>& same, double thr) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] >= thr) == same[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

// Best single threshold over the candidate sweep: all midpoints of sorted
// scores plus both all-same / all-different extremes.
inline double best_threshold_accuracy(const std::vector<double>& scores, const std::vector<bool>& same,
                                      double* best_thr = nullptr) {
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates{sorted.front() - 1.0, sorted.back() + 1.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  double best = -1.0, thr = 0.0;
  for (double c : candidates) {
    const double acc = accuracy_at_threshold(scores, same, c);
    if (acc > best) {
      best = acc;
      thr = c;
    }
  }
  if (best_thr) *best_thr = thr;
  return best;
}

}  // namespace detail

// 1:1 verification. folds == 1 reports accuracy at the single best threshold;
// folds > 1 runs the k-fold protocol (threshold chosen on the other folds).
inline double eval_verification(Backbone& model, const std::vector<VerificationPair>& pairs, unsigned ratio,
                                std::size_t folds = 1, double mean = 0.5, double stddev = 0.5) {
  if (pairs.empty()) throw DataError("eval_verification: no pairs");
  std::vector<const ImageU8*> images;
  images.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    images.push_back(&p.a);
    images.push_back(&p.b);
  }
  auto emb = embed_images(model, images, ratio, 128, mean, stddev);
  std::vector<double> scores(pairs.size());
  std::vector<bool> same(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    scores[i] = detail::dot(emb[2 * i], emb[2 * i + 1]);
    same[i] = pairs[i].same;
  }
  if (folds <= 1) return detail::best_threshold_accuracy(scores, same);
  if (pairs.size() < folds) throw DataError("eval_verification: fewer pairs than folds");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<double> train_s, test_s;
    std::vector<bool> train_y, test_y;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i % folds == f) {
        test_s.push_back(scores[i]);
        test_y.push_back(same[i]);
      } else {
        train_s.push_back(scores[i]);
        train_y.push_back(same[i]);
      }
    }
    double thr = 0.0;
    detail::best_threshold_accuracy(train_s, train_y, &thr);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_s.size(); ++i)
      if ((test_s[i] >= thr) == test_y[i]) ++correct;
    total += static_cast<double>(correct);
    counted += test_s.size();
  }
  return total / static_cast<double>(counted);
}

// 1:N identification: nearest gallery embedding by cosine similarity, rank-1
// label match rate.
inline double eval_identification(Backbone& model, const Dataset& gallery, const Dataset& probes, unsigned ratio,
                                  double mean = 0.5, double stddev = 0.5) {
  if (gallery.empty() || probes.empty()) throw DataError("eval_identification: empty gallery or probe set");
  auto g_emb = embed_images(model, image_pointers(gallery), ratio, 128, mean, stddev);
  auto p_emb = embed_images(model, image_pointers(probes), ratio, 128, mean, stddev);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::size_t best = 0;
    double best_score = -1e30;
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double score = detail::dot(p_emb[i], g_emb[j]);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (gallery.samples[best].label == probes.samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probes.size());
}

}  // namespace fskd
