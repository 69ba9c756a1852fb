#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/gemm.hpp"
#include "fskd/core/parallel.hpp"
#include "fskd/core/tensor.hpp"

namespace fskd {

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!GradTape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;  // element strides aligned to out rank, 0 on broadcast dims
  std::vector<std::size_t> stride_b;
};

inline BroadcastPlan make_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.assign(rank, 1);
  p.stride_a.assign(rank, 0);
  p.stride_b.assign(rank, 0);
  // contiguous strides of each input, right-aligned
  std::vector<std::size_t> sa(a.size()), sb(b.size());
  std::size_t acc = 1;
  for (std::size_t i = a.size(); i-- > 0;) { sa[i] = acc; acc *= a[i]; }
  acc = 1;
  for (std::size_t i = b.size(); i-- > 0;) { sb[i] = acc; acc *= b[i]; }
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    p.out[i] = std::max(da, db);
    if (da != 1) p.stride_a[i] = sa[i - (rank - a.size())];
    if (db != 1) p.stride_b[i] = sb[i - (rank - b.size())];
  }
  return p;
}

// Walks every position of `out_shape`, handing the two mapped input offsets to fn.
template <typename Fn>
inline void for_each_broadcast(const Shape& out_shape, const std::vector<std::size_t>& stride_a,
                               const std::vector<std::size_t>& stride_b, Fn&& fn) {
  const std::size_t n = shape_numel(out_shape);
  const std::size_t rank = out_shape.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t off_a = 0, off_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, off_a, off_b);
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      off_a += stride_a[d];
      off_b += stride_b[d];
      if (counter[d] < out_shape[d]) break;
      counter[d] = 0;
      off_a -= out_shape[d] * stride_a[d];
      off_b -= out_shape[d] * stride_b[d];
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

// Iteration pattern of a binary op. `row` covers the frequent
// (N,K) op (N,1) per-row normalizations without the generic odometer.
enum class BinIter { same, row, generic };

template <typename Fn>
inline void for_each_pair(BinIter kind, const Shape& out_shape, const std::vector<std::size_t>& sa,
                          const std::vector<std::size_t>& sb, Fn&& fn) {
  if (kind == BinIter::same) {
    const std::size_t n = shape_numel(out_shape);
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
  } else if (kind == BinIter::row) {
    const std::size_t rows = out_shape[0], cols = out_shape[1];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) fn(r * cols + c, r * cols + c, r);
  } else {
    for_each_broadcast(out_shape, sa, sb, fn);
  }
}

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const auto& ad = a.data();
  const auto& bd = b.data();
  BinIter kind;
  BroadcastPlan plan;
  Shape out_shape;
  if (a.shape() == b.shape()) {
    kind = BinIter::same;
    out_shape = a.shape();
  } else if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == 1) {
    kind = BinIter::row;
    out_shape = a.shape();
  } else {
    kind = BinIter::generic;
    plan = make_broadcast(a.shape(), b.shape(), name);
    out_shape = plan.out;
  }
  Tensor out = Tensor::zeros(out_shape);
  auto& od = out.data_mut();
  switch (op) {
    case BinOp::Add:
      for_each_pair(kind, out_shape, plan.stride_a, plan.stride_b,
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = ad[ia] + bd[ib]; });
      break;
    case BinOp::Sub:
      for_each_pair(kind, out_shape, plan.stride_a, plan.stride_b,
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = ad[ia] - bd[ib]; });
      break;
    case BinOp::Mul:
      for_each_pair(kind, out_shape, plan.stride_a, plan.stride_b,
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = ad[ia] * bd[ib]; });
      break;
    case BinOp::Div:
      for_each_pair(kind, out_shape, plan.stride_a, plan.stride_b,
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = ad[ia] / bd[ib]; });
      break;
  }
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    auto sa = plan.stride_a, sb = plan.stride_b;
    GradTape::active()->record([ai, bi, oi, op, kind, out_shape, sa, sb]() {
      const auto& g = oi->grad;
      const bool ga = ai->requires_grad, gb = bi->requires_grad;
      switch (op) {
        case BinOp::Add:
          for_each_pair(kind, out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ai->grad[ia] += g[i];
            if (gb) bi->grad[ib] += g[i];
          });
          break;
        case BinOp::Sub:
          for_each_pair(kind, out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ai->grad[ia] += g[i];
            if (gb) bi->grad[ib] -= g[i];
          });
          break;
        case BinOp::Mul:
          for_each_pair(kind, out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ai->grad[ia] += g[i] * bi->data[ib];
            if (gb) bi->grad[ib] += g[i] * ai->data[ia];
          });
          break;
        case BinOp::Div:
          for_each_pair(kind, out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ai->grad[ia] += g[i] / bi->data[ib];
            if (gb) bi->grad[ib] -= g[i] * ai->data[ia] / (bi->data[ib] * bi->data[ib]);
          });
          break;
      }
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise (broadcasting, numpy-style right alignment)
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Mul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Div, "div"); }

// y = scale * x + shift
inline Tensor affine(const Tensor& x, double scale, double shift = 0.0) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& od = out.data_mut();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = scale * xd[i] + shift;
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi, scale]() {
      if (!xi->requires_grad) return;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += scale * oi->grad[i];
    });
  }
  return out;
}

inline Tensor neg(const Tensor& x) { return affine(x, -1.0); }

namespace detail {

template <typename FwdFn, typename BwdFn>
inline Tensor unary_op(const Tensor& x, FwdFn fwd, BwdFn bwd) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& od = out.data_mut();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = fwd(xd[i]);
  if (should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi, bwd]() {
      if (!xi->requires_grad) return;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += bwd(xi->data[i], oi->data[i]) * oi->grad[i];
    });
  }
  return out;
}

}  // namespace detail

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// sqrt(x + eps); the epsilon keeps the gradient finite at x = 0.
inline Tensor sqrt_eps(const Tensor& x, double eps) {
  return detail::unary_op(
      x, [eps](double v) { return std::sqrt(v + eps); }, [](double, double o) { return 0.5 / o; });
}

// |x| with sign subgradient (0 at the kink).
inline Tensor abs(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi]() {
      if (!xi->requires_grad) return;
      const double g = oi->grad[0];
      for (auto& v : xi->grad) v += g;
    });
  }
  return out;
}

inline Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return affine(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

inline Tensor sum_axes(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdim) {
  const Shape& in = x.shape();
  std::vector<bool> reduced(in.size(), false);
  for (auto a : axes) {
    if (a >= in.size()) throw ShapeError("sum_axes: axis " + std::to_string(a) + " out of range for " + shape_str(in));
    reduced[a] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (!reduced[d]) out_shape.push_back(in[d]);
    else if (keepdim) out_shape.push_back(1);
  }
  // per-input-dim stride into the output
  std::vector<std::size_t> out_stride(in.size(), 0);
  {
    std::size_t acc = 1;
    for (std::size_t d = in.size(); d-- > 0;) {
      if (!reduced[d]) { out_stride[d] = acc; acc *= in[d]; }
    }
  }
  Tensor out = Tensor::zeros(out_shape);
  auto& od = out.data_mut();
  const auto& xd = x.data();
  detail::for_each_broadcast(in, out_stride, std::vector<std::size_t>(in.size(), 0),
                             [&](std::size_t i, std::size_t oidx, std::size_t) { od[oidx] += xd[i]; });
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    auto in_shape = in;
    GradTape::active()->record([xi, oi, in_shape, out_stride]() {
      if (!xi->requires_grad) return;
      detail::for_each_broadcast(in_shape, out_stride, std::vector<std::size_t>(in_shape.size(), 0),
                                 [&](std::size_t i, std::size_t oidx, std::size_t) { xi->grad[i] += oi->grad[oidx]; });
    });
  }
  return out;
}

// sqrt of sum of squares over `axes`, with a 1e-12 epsilon inside the sqrt so
// dead (all-zero) features keep a finite gradient.
inline constexpr double kNormEps = 1e-12;

inline Tensor l2_norm(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdim = false) {
  return sqrt_eps(sum_axes(square(x), axes, keepdim), kNormEps);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  Tensor out = Tensor::from_data(std::move(new_shape), x.data());
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi]() {
      if (!xi->requires_grad) return;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// N x C x H x W -> (N*C*H*W flattened rows) N x (C*H*W)
inline Tensor flatten_rows(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("flatten_rows: need rank >= 2, got " + shape_str(x.shape()));
  return reshape(x, Shape{x.dim(0), x.size() / x.dim(0)});
}

// N x C x H x W -> (N*H*W) x C; one row per spatial location.
inline Tensor channels_last_rows(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("channels_last_rows: need NCHW, got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = Tensor::zeros(Shape{N * H * W, C});
  const auto& xd = x.data();
  auto& od = out.data_mut();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = xd.data() + (n * C + c) * H * W;
      double* dst = od.data() + n * H * W * C + c;
      for (std::size_t p = 0; p < H * W; ++p) dst[p * C] = src[p];
    }
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi, N, C, H, W]() {
      if (!xi->requires_grad) return;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          double* dst = xi->grad.data() + (n * C + c) * H * W;
          const double* src = oi->grad.data() + n * H * W * C + c;
          for (std::size_t p = 0; p < H * W; ++p) dst[p] += src[p * C];
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: need rank-2 operands, got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(Shape{M, N});
  detail::gemm_nn(M, N, K, a.data().data(), K, b.data().data(), N, out.data_mut().data(), N);
  if (detail::should_record({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    GradTape::active()->record([ai, bi, oi, M, N, K]() {
      if (ai->requires_grad)
        detail::gemm_nt(M, K, N, oi->grad.data(), N, bi->data.data(), N, ai->grad.data(), K, true);
      if (bi->requires_grad)
        detail::gemm_tn(K, N, M, ai->data.data(), K, oi->grad.data(), N, bi->grad.data(), N, true);
    });
  }
  return out;
}

// input N x d times weight d x n; no bias.
inline Tensor linear(const Tensor& input, const Tensor& weight) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(0))
    throw ShapeError("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  return matmul(input, weight);
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding)
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col_t(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW,
                     std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW, double* colt) {
  // colt is [C*KH*KW x OH*OW]
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t kh = 0; kh < KH; ++kh)
      for (std::size_t kw = 0; kw < KW; ++kw) {
        double* row = colt + ((c * KH + kh) * KW + kw) * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(pad);
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(pad);
            row[oh * OW + ow] = (ih >= 0 && ih < static_cast<long>(H) && iw >= 0 && iw < static_cast<long>(W))
                                    ? x[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)]
                                    : 0.0;
          }
        }
      }
}

inline void col2im_t_add(const double* colt, std::size_t C, std::size_t H, std::size_t W, std::size_t KH,
                         std::size_t KW, std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW,
                         double* dx) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t kh = 0; kh < KH; ++kh)
      for (std::size_t kw = 0; kw < KW; ++kw) {
        const double* row = colt + ((c * KH + kh) * KW + kw) * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(pad);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(pad);
            if (iw < 0 || iw >= static_cast<long>(W)) continue;
            dx[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)] += row[oh * OW + ow];
          }
        }
      }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1, std::size_t padding = 0) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: need NCHW input and OCKK kernel, got " + shape_str(input.shape()) + " and " +
                     shape_str(kernel.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2), KW = kernel.dim(3);
  if (KC != C)
    throw ShapeError("conv2d: input has " + std::to_string(C) + " channels but kernel expects " + std::to_string(KC));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (H + 2 * padding < KH || W + 2 * padding < KW)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  const std::size_t OH = (H + 2 * padding - KH) / stride + 1;
  const std::size_t OW = (W + 2 * padding - KW) / stride + 1;
  const std::size_t CKK = C * KH * KW;
  const std::size_t OHW = OH * OW;

  Tensor out = Tensor::zeros(Shape{N, O, OH, OW});
  const bool rec = detail::should_record({&input, &kernel});
  constexpr std::size_t kChunk = 8;  // fixed so reductions are thread-count independent
  // im2col scratch stays uninitialized; every slot is written below
  std::shared_ptr<double[]> cols(new double[rec ? N * CKK * OHW : 0]);

  parallel_for_fixed_chunks(N, kChunk, [&](std::size_t, std::size_t n_begin, std::size_t n_end) {
    std::unique_ptr<double[]> scratch(rec ? nullptr : new double[CKK * OHW]);
    for (std::size_t n = n_begin; n < n_end; ++n) {
      double* colt = rec ? cols.get() + n * CKK * OHW : scratch.get();
      detail::im2col_t(input.data().data() + n * C * H * W, C, H, W, KH, KW, stride, padding, OH, OW, colt);
      detail::gemm_nn(O, OHW, CKK, kernel.data().data(), CKK, colt, OHW,
                      out.data_mut().data() + n * O * OHW, OHW);
    }
  });

  if (rec) {
    out.set_requires_grad(true);
    auto xi = input.impl(), ki = kernel.impl(), oi = out.impl();
    GradTape::active()->record([xi, ki, oi, cols, N, C, H, W, O, KH, KW, stride, padding, OH, OW, CKK, OHW]() {
      const std::size_t n_chunks = (N + kChunk - 1) / kChunk;
      std::vector<double> dw_partial(ki->requires_grad ? n_chunks * O * CKK : 0, 0.0);
      parallel_for_fixed_chunks(N, kChunk, [&](std::size_t chunk, std::size_t n_begin, std::size_t n_end) {
        std::unique_ptr<double[]> dcol(xi->requires_grad ? new double[CKK * OHW] : nullptr);
        for (std::size_t n = n_begin; n < n_end; ++n) {
          const double* go = oi->grad.data() + n * O * OHW;
          const double* colt = cols.get() + n * CKK * OHW;
          if (ki->requires_grad)
            detail::gemm_nt(O, CKK, OHW, go, OHW, colt, OHW, dw_partial.data() + chunk * O * CKK, CKK, true);
          if (xi->requires_grad) {
            detail::gemm_tn(CKK, OHW, O, ki->data.data(), CKK, go, OHW, dcol.get(), OHW, false);
            detail::col2im_t_add(dcol.get(), C, H, W, KH, KW, stride, padding, OH, OW,
                                 xi->grad.data() + n * C * H * W);
          }
        }
      });
      if (ki->requires_grad)
        for (std::size_t chunk = 0; chunk < n_chunks; ++chunk)
          for (std::size_t i = 0; i < O * CKK; ++i) ki->grad[i] += dw_partial[chunk * O * CKK + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

inline Tensor avg_pool2d(const Tensor& input, std::size_t k, std::size_t stride) {
  if (input.rank() != 4) throw ShapeError("avg_pool2d: need NCHW, got " + shape_str(input.shape()));
  if (k == 0 || stride == 0) throw ShapeError("avg_pool2d: kernel and stride must be positive");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < k || W < k) throw ShapeError("avg_pool2d: window larger than input");
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  Tensor out = Tensor::zeros(Shape{N, C, OH, OW});
  const auto& xd = input.data();
  auto& od = out.data_mut();
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) s += xd[(nc * H + oh * stride + i) * W + ow * stride + j];
        od[(nc * OH + oh) * OW + ow] = s * inv;
      }
  if (detail::should_record({&input})) {
    out.set_requires_grad(true);
    auto xi = input.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi, N, C, H, W, OH, OW, k, stride, inv]() {
      if (!xi->requires_grad) return;
      for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const double g = oi->grad[(nc * OH + oh) * OW + ow] * inv;
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) xi->grad[(nc * H + oh * stride + i) * W + ow * stride + j] += g;
          }
    });
  }
  return out;
}

// N x C x H x W -> N x C (spatial mean).
inline Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool: need NCHW, got " + shape_str(input.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor out = Tensor::zeros(Shape{N, C});
  const auto& xd = input.data();
  auto& od = out.data_mut();
  const double inv = 1.0 / static_cast<double>(HW);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (std::size_t p = 0; p < HW; ++p) s += xd[nc * HW + p];
    od[nc] = s * inv;
  }
  if (detail::should_record({&input})) {
    out.set_requires_grad(true);
    auto xi = input.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi, N, C, HW, inv]() {
      if (!xi->requires_grad) return;
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double g = oi->grad[nc] * inv;
        for (std::size_t p = 0; p < HW; ++p) xi->grad[nc * HW + p] += g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization (NCHW, per channel)
// ---------------------------------------------------------------------------

inline Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         std::vector<double>& running_mean, std::vector<double>& running_var, double momentum,
                         double eps, bool training) {
  if (input.rank() != 4) throw ShapeError("batch_norm: need NCHW, got " + shape_str(input.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C)
    throw ShapeError("batch_norm: parameter size mismatch for " + std::to_string(C) + " channels");
  if (training && N < 2) throw ShapeError("batch_norm: training mode requires batch size >= 2");

  const std::size_t m = N * HW;
  std::vector<double> mean(C, 0.0), inv_std(C, 0.0);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* x = input.data().data() + (n * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) s += x[p];
      }
      mean[c] = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* x = input.data().data() + (n * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) {
          const double d = x[p] - mean[c];
          v += d * d;
        }
      }
      const double var = v / static_cast<double>(m);  // biased, used for normalization
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor out = Tensor::zeros(input.shape());
  auto xhat = std::make_shared<std::vector<double>>(input.size());
  {
    const auto& xd = input.data();
    auto& od = out.data_mut();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double mu = mean[c], is = inv_std[c], g = gamma.data()[c], b = beta.data()[c];
        const std::size_t base = (n * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) {
          const double h = (xd[base + p] - mu) * is;
          (*xhat)[base + p] = h;
          od[base + p] = g * h + b;
        }
      }
  }

  if (detail::should_record({&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xi = input.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    GradTape::active()->record([xi, gi, bi, oi, xhat, inv_std, N, C, HW, m, training]() {
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * HW;
          for (std::size_t p = 0; p < HW; ++p) {
            sum_dy += oi->grad[base + p];
            sum_dy_xhat += oi->grad[base + p] * (*xhat)[base + p];
          }
        }
        if (bi->requires_grad) bi->grad[c] += sum_dy;
        if (gi->requires_grad) gi->grad[c] += sum_dy_xhat;
        if (xi->requires_grad) {
          const double g = gi->data[c], is = inv_std[c];
          if (training) {
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t base = (n * C + c) * HW;
              for (std::size_t p = 0; p < HW; ++p)
                xi->grad[base + p] +=
                    g * is * (oi->grad[base + p] - inv_m * sum_dy - (*xhat)[base + p] * inv_m * sum_dy_xhat);
            }
          } else {
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t base = (n * C + c) * HW;
              for (std::size_t p = 0; p < HW; ++p) xi->grad[base + p] += g * is * oi->grad[base + p];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classification losses
// ---------------------------------------------------------------------------

inline Tensor onehot(const std::vector<int>& labels, std::size_t n_classes) {
  Tensor t = Tensor::zeros(Shape{labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
      throw ShapeError("onehot: label " + std::to_string(labels[i]) + " out of range [0," +
                       std::to_string(n_classes) + ")");
    t.data_mut()[i * n_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

// Mean over the batch of -log softmax(logits) at the true class.
// Stable log-sum-exp with max subtraction; one fused tape node.
inline Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be N x n, got " + shape_str(logits.shape()));
  const std::size_t N = logits.dim(0), n = logits.dim(1);
  if (labels.size() != N)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(N));
  auto probs = std::make_shared<std::vector<double>>(N * n);
  double loss = 0.0;
  const auto& ld = logits.data();
  for (std::size_t i = 0; i < N; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n)
      throw ShapeError("cross_entropy: label " + std::to_string(labels[i]) + " out of range [0," + std::to_string(n) +
                       ")");
    const double* row = ld.data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) (*probs)[i * n + j] = std::exp(row[j] - lse);
    loss += lse - row[static_cast<std::size_t>(labels[i])];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(N));
  if (detail::should_record({&logits})) {
    out.set_requires_grad(true);
    auto li = logits.impl(), oi = out.impl();
    auto lab = labels;
    GradTape::active()->record([li, oi, probs, lab, N, n]() {
      if (!li->requires_grad) return;
      const double g = oi->grad[0] / static_cast<double>(N);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < n; ++j)
          li->grad[i * n + j] +=
              g * ((*probs)[i * n + j] - (static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0));
    });
  }
  return out;
}

}  // namespace fskd
