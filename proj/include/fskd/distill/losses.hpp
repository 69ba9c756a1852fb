#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/ops.hpp"
#include "fskd/core/tensor.hpp"

namespace fskd {

enum class DistillKind { none, fitnet_l2, norm_kd, fskd };

inline const char* to_string(DistillKind k) {
  switch (k) {
    case DistillKind::none: return "none";
    case DistillKind::fitnet_l2: return "fitnet_l2";
    case DistillKind::norm_kd: return "norm_kd";
    case DistillKind::fskd: return "fskd";
  }
  return "?";
}

inline DistillKind distill_kind_from_string(const std::string& s) {
  if (s == "none") return DistillKind::none;
  if (s == "fitnet_l2" || s == "fitnet") return DistillKind::fitnet_l2;
  if (s == "norm_kd" || s == "normkd") return DistillKind::norm_kd;
  if (s == "fskd") return DistillKind::fskd;
  throw ConfigError("unknown distillation kind '" + s + "'");
}

// whole_map: one vector of length C*H*W per sample per block.
// per_location: one C-vector per spatial position, cosine averaged over
// positions as well; provided because the map-level granularity of the
// similarity loss is a modelling choice.
enum class FlattenMode { whole_map, per_location };

inline FlattenMode flatten_mode_from_string(const std::string& s) {
  if (s == "whole_map") return FlattenMode::whole_map;
  if (s == "per_location") return FlattenMode::per_location;
  throw ConfigError("unknown flatten mode '" + s + "'");
}

inline const char* to_string(FlattenMode m) {
  return m == FlattenMode::whole_map ? "whole_map" : "per_location";
}

struct DistillConfig {
  DistillKind kind = DistillKind::none;
  double lambda_distill = 5.0;
  FlattenMode flatten_mode = FlattenMode::whole_map;

  void validate() const {
    if (lambda_distill < 0.0) throw ConfigError("lambda_distill must be non-negative");
  }
};

namespace detail {

inline void check_tap_pair(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  if (teacher.size() != student.size())
    throw ShapeError("distill: teacher has " + std::to_string(teacher.size()) + " taps, student has " +
                     std::to_string(student.size()));
  if (teacher.empty()) throw ShapeError("distill: empty tap list");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].shape() != student[i].shape())
      throw ShapeError("distill: tap " + std::to_string(i) + " shape mismatch: " + shape_str(teacher[i].shape()) +
                       " vs " + shape_str(student[i].shape()));
    if (teacher[i].requires_grad())
      throw ShapeError("distill: teacher tap " + std::to_string(i) + " must be gradient-detached");
  }
}

inline Tensor tap_rows(const Tensor& tap, FlattenMode mode) {
  if (mode == FlattenMode::per_location && tap.rank() == 4) return channels_last_rows(tap);
  return flatten_rows(tap);
}

}  // namespace detail

// (1/L) sum_i (1 - <f_T,i / ||f_T,i||, f_S,i / ||f_S,i||>), cosine per sample
// (or per location), averaged over the batch. Value in [0,2]; gradient flows
// only into the student taps.
inline Tensor fskd_loss(const std::vector<Tensor>& teacher_taps, const std::vector<Tensor>& student_taps,
                        FlattenMode mode = FlattenMode::whole_map) {
  detail::check_tap_pair(teacher_taps, student_taps);
  const std::size_t L = teacher_taps.size();
  Tensor total;
  for (std::size_t i = 0; i < L; ++i) {
    Tensor t = detail::tap_rows(teacher_taps[i], mode);
    Tensor s = detail::tap_rows(student_taps[i], mode);
    Tensor cos = sum_axes(mul(div(t, l2_norm(t, {1}, true)), div(s, l2_norm(s, {1}, true))), {1}, false);
    Tensor block = mean_all(affine(cos, -1.0, 1.0));  // mean of (1 - cos)
    total = i == 0 ? block : add(total, block);
  }
  return affine(total, 1.0 / static_cast<double>(L));
}

// Mean over blocks and batch of || f_T - f_S ||_2 on the raw per-sample tap
// vectors. Deliberately scale-sensitive (distills norm and direction).
inline Tensor fitnet_loss(const std::vector<Tensor>& teacher_taps, const std::vector<Tensor>& student_taps) {
  detail::check_tap_pair(teacher_taps, student_taps);
  const std::size_t L = teacher_taps.size();
  Tensor total;
  for (std::size_t i = 0; i < L; ++i) {
    Tensor diff = sub(flatten_rows(teacher_taps[i]), flatten_rows(student_taps[i]));
    Tensor block = mean_all(l2_norm(diff, {1}, false));
    total = i == 0 ? block : add(total, block);
  }
  return affine(total, 1.0 / static_cast<double>(L));
}

// Mean over blocks and batch of | ||f_T||_2 - ||f_S||_2 | per sample.
inline Tensor normkd_loss(const std::vector<Tensor>& teacher_taps, const std::vector<Tensor>& student_taps) {
  detail::check_tap_pair(teacher_taps, student_taps);
  const std::size_t L = teacher_taps.size();
  Tensor total;
  for (std::size_t i = 0; i < L; ++i) {
    Tensor nt = l2_norm(flatten_rows(teacher_taps[i]), {1}, false);
    Tensor ns = l2_norm(flatten_rows(student_taps[i]), {1}, false);
    Tensor block = mean_all(abs(sub(nt, ns)));
    total = i == 0 ? block : add(total, block);
  }
  return affine(total, 1.0 / static_cast<double>(L));
}

inline Tensor distill_loss(DistillKind kind, const std::vector<Tensor>& teacher_taps,
                           const std::vector<Tensor>& student_taps, FlattenMode mode = FlattenMode::whole_map) {
  switch (kind) {
    case DistillKind::fitnet_l2: return fitnet_loss(teacher_taps, student_taps);
    case DistillKind::norm_kd: return normkd_loss(teacher_taps, student_taps);
    case DistillKind::fskd: return fskd_loss(teacher_taps, student_taps, mode);
    case DistillKind::none: break;
  }
  throw ConfigError("distill_loss: kind 'none' has no distillation term");
}

// task + lambda * distill; with kind none this is the task loss, exactly.
inline Tensor total_loss(const Tensor& task_loss, const Tensor& distill, const DistillConfig& config) {
  if (task_loss.size() != 1) throw ShapeError("total_loss: task loss must be scalar");
  if (config.kind == DistillKind::none) return task_loss;
  if (distill.size() != 1) throw ShapeError("total_loss: distill loss must be scalar");
  if (!std::isfinite(task_loss.item()) || !std::isfinite(distill.item()))
    throw NumericError("total_loss: non-finite loss term");
  return add(task_loss, affine(distill, config.lambda_distill));
}

}  // namespace fskd
