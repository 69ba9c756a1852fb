#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/ops.hpp"
#include "fskd/core/random.hpp"
#include "fskd/core/tensor.hpp"

namespace fskd {

// CosFace head: class weights plus the (s, m) pair. The stored W is
// unconstrained; columns are renormalized functionally at every loss
// evaluation.
struct MarginHeadParams {
  Tensor W;  // d x n
  double scale = 64.0;
  double margin = 0.35;

  MarginHeadParams() = default;
  MarginHeadParams(std::size_t embedding_dim, std::size_t num_classes, double s, double m, std::uint64_t seed)
      : scale(s), margin(m) {
    if (s <= 0.0) throw ConfigError("margin head: scale must be positive");
    if (m < 0.0 || m >= 1.0) throw ConfigError("margin head: margin must be in [0,1)");
    Rng rng(mix_seed(seed, 0x68656164ULL));
    W = Tensor::zeros(Shape{embedding_dim, num_classes}, /*requires_grad=*/true);
    rng.fill_kaiming_uniform(W.data_mut(), embedding_dim);
  }

  std::size_t embedding_dim() const { return W.dim(0); }
  std::size_t num_classes() const { return W.dim(1); }
};

namespace detail {

inline void check_labels(const std::vector<int>& labels, std::size_t n, std::size_t batch) {
  if (labels.size() != batch)
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(batch));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n)
      throw ShapeError("loss: label " + std::to_string(y) + " out of range [0," + std::to_string(n) + ")");
}

inline void check_nonzero_rows(const Tensor& x, const char* what) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x.data()[i * d + j];
      s += v * v;
    }
    if (s == 0.0) throw NumericError(std::string(what) + " " + std::to_string(i) + " has zero norm, cannot normalize");
  }
}

}  // namespace detail

inline Tensor normalize_rows(const Tensor& x) { return div(x, l2_norm(x, {1}, /*keepdim=*/true)); }
inline Tensor normalize_cols(const Tensor& x) { return div(x, l2_norm(x, {0}, /*keepdim=*/true)); }

// Plain softmax loss, logits = W^T x, no normalization, no bias.
inline Tensor softmax_loss(const Tensor& embeddings, const std::vector<int>& labels, const Tensor& W) {
  if (embeddings.rank() != 2 || W.rank() != 2 || embeddings.dim(1) != W.dim(0))
    throw ShapeError("softmax_loss: embeddings " + shape_str(embeddings.shape()) + " incompatible with W " +
                     shape_str(W.shape()));
  detail::check_labels(labels, W.dim(1), embeddings.dim(0));
  return cross_entropy_with_logits(matmul(embeddings, W), labels);
}

// Cosine logits s * cos(theta) with the margin m subtracted from the true
// class before scaling.
inline Tensor cosface_logits(const Tensor& embeddings, const std::vector<int>& labels,
                             const MarginHeadParams& params) {
  detail::check_nonzero_rows(embeddings, "cosface_loss: embedding row");
  Tensor cos = matmul(normalize_rows(embeddings), normalize_cols(params.W));
  if (params.margin != 0.0) {
    Tensor margin_mask = onehot(labels, params.num_classes());
    cos = sub(cos, affine(margin_mask, params.margin));
  }
  return affine(cos, params.scale);
}

inline Tensor cosface_loss(const Tensor& embeddings, const std::vector<int>& labels, const MarginHeadParams& params) {
  if (embeddings.rank() != 2 || embeddings.dim(1) != params.embedding_dim())
    throw ShapeError("cosface_loss: embeddings " + shape_str(embeddings.shape()) + " incompatible with W " +
                     shape_str(params.W.shape()));
  detail::check_labels(labels, params.num_classes(), embeddings.dim(0));
  return cross_entropy_with_logits(cosface_logits(embeddings, labels, params), labels);
}

// Margin-free cosine scores for evaluation: rows normalize(x), cols normalize(W).
inline Tensor cosine_scores(const Tensor& embeddings, const Tensor& W) {
  return matmul(normalize_rows(embeddings), normalize_cols(W));
}

}  // namespace fskd
