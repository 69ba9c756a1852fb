#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fskd/cli/config.hpp"
#include "fskd/core/malloc_tuning.hpp"
#include "fskd/core/sgd.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/data/batch.hpp"
#include "fskd/data/eval.hpp"
#include "fskd/distill/losses.hpp"
#include "fskd/io/checkpoint.hpp"
#include "fskd/model/backbone.hpp"
#include "fskd/model/margin_head.hpp"

namespace fskd {

struct TrainedModel {
  Backbone model;
  MarginHeadParams head;
  SgdState optimizer;
  std::uint64_t steps = 0;
  double final_eval_acc = -1.0;
  std::string rng_state;
};

namespace detail {

inline std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Frozen-teacher tap memo. Valid because eval-mode teacher outputs depend
// only on the (fixed) HR image of each sample; disabled under augmentation.
class TeacherTapCache {
 public:
  TeacherTapCache(std::size_t n_samples, std::size_t n_blocks, bool enabled)
      : enabled_(enabled), blocks_(n_blocks), taps_(enabled ? n_samples * n_blocks : 0) {}

  bool enabled() const { return enabled_; }

  bool has(std::size_t sample) const { return enabled_ && !taps_[sample * blocks_].empty(); }

  void store(std::size_t sample, const std::vector<Tensor>& taps, std::size_t row) {
    if (!enabled_) return;
    for (std::size_t b = 0; b < blocks_; ++b) {
      const std::size_t k = taps[b].size() / taps[b].dim(0);
      taps_[sample * blocks_ + b].assign(taps[b].data().begin() + row * k, taps[b].data().begin() + (row + 1) * k);
    }
  }

  // Assemble batch tap tensors from cached rows; shapes from a template
  // forward pass are reproduced with the batch dimension of `indices`.
  std::vector<Tensor> assemble(const std::vector<std::size_t>& indices, const std::vector<Shape>& tap_shapes) const {
    std::vector<Tensor> out;
    for (std::size_t b = 0; b < blocks_; ++b) {
      Shape s = tap_shapes[b];
      s[0] = indices.size();
      Tensor t = Tensor::zeros(s);
      const std::size_t k = t.size() / indices.size();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& row = taps_[indices[i] * blocks_ + b];
        std::copy(row.begin(), row.end(), t.data_mut().begin() + i * k);
      }
      out.push_back(t);
    }
    return out;
  }

 private:
  bool enabled_;
  std::size_t blocks_;
  std::vector<std::vector<double>> taps_;  // [sample * blocks + b]
};

}  // namespace detail

// One training run: teacher when `teacher == nullptr` and the resolution is
// ratio-1, student otherwise. Metrics stream receives one CSV row per step:
//   step,epoch,lr,task_loss,distill_loss,total_loss,eval_acc
// with eval_acc blank between evaluation points.
inline TrainedModel train_loop(const RunConfig& cfg, const Dataset& train, const Dataset* eval_ds, Backbone* teacher,
                               std::ostream& metrics) {
  tune_malloc_for_training();
  cfg.validate();
  if (train.empty()) throw DataError("train_loop: empty training set");
  if (train.num_classes < 2) throw DataError("train_loop: need at least 2 classes");
  if (cfg.distill.kind != DistillKind::none && teacher == nullptr)
    throw ConfigError("train_loop: distillation requires a teacher");
  if (teacher && !(teacher->config() == cfg.backbone))
    throw ConfigError("train_loop: teacher backbone config does not match student config");

  TrainedModel out{Backbone(cfg.backbone, cfg.seed),
                   MarginHeadParams(cfg.backbone.embedding_dim, train.num_classes, cfg.head_scale, cfg.head_margin,
                                    cfg.seed),
                   SgdState(cfg.schedule.lr, cfg.schedule.momentum, cfg.schedule.weight_decay)};

  std::vector<Tensor> params = out.model.parameters();
  params.push_back(out.head.W);
  out.optimizer.bind(params);

  const bool augment = cfg.augment_flip(train);
  BatchIterator it(train, cfg.resolution, cfg.schedule.batch_size, cfg.seed, augment, cfg.norm_mean, cfg.norm_std);
  const std::size_t steps_per_epoch = it.batches_per_epoch();
  const std::size_t total_steps = steps_per_epoch * cfg.schedule.epochs;

  const bool distilling = cfg.distill.kind != DistillKind::none;
  detail::TeacherTapCache cache(train.size(), cfg.backbone.num_blocks(),
                                distilling && cfg.cache_teacher && !augment);
  std::vector<Shape> tap_shapes;

  metrics << "step,epoch,lr,task_loss,distill_loss,total_loss,eval_acc\n";
  for (std::size_t step = 0; step < total_steps; ++step) {
    const std::size_t epoch = step / steps_per_epoch;
    out.optimizer.learning_rate = cfg.schedule.lr_at_epoch(epoch);

    PairedBatch batch = it.next();

    GradTape tape;
    TapeScope scope(tape);

    std::vector<Tensor> teacher_taps;
    if (distilling) {
      bool all_cached = cache.enabled() && !tap_shapes.empty();
      if (all_cached)
        for (auto idx : batch.indices)
          if (!cache.has(idx)) {
            all_cached = false;
            break;
          }
      if (all_cached) {
        teacher_taps = cache.assemble(batch.indices, tap_shapes);
      } else {
        NoGradScope ng;
        auto t_out = teacher->forward_with_taps(batch.hr, false);
        teacher_taps = t_out.taps;
        if (tap_shapes.empty())
          for (const auto& t : teacher_taps) tap_shapes.push_back(t.shape());
        if (cache.enabled())
          for (std::size_t i = 0; i < batch.indices.size(); ++i) cache.store(batch.indices[i], teacher_taps, i);
      }
    }

    auto student_out = out.model.forward_with_taps(batch.lr, /*training=*/true);
    Tensor task = cosface_loss(student_out.embedding, batch.labels, out.head);
    Tensor dloss;
    Tensor total = task;
    if (distilling) {
      dloss = distill_loss(cfg.distill.kind, teacher_taps, student_out.taps, cfg.distill.flatten_mode);
      total = total_loss(task, dloss, cfg.distill);
    }
    if (!std::isfinite(total.item()))
      throw NumericError("train_loop: non-finite loss at step " + std::to_string(step + 1));

    tape.backward(total);
    sgd_step(params, out.optimizer);
    zero_grads(params);

    // metrics row
    metrics << (step + 1) << ',' << epoch << ',' << detail::format_g(out.optimizer.learning_rate) << ','
            << detail::format_g(task.item()) << ',' << (distilling ? detail::format_g(dloss.item()) : "0") << ','
            << detail::format_g(total.item()) << ',';
    const bool epoch_end = (step + 1) % steps_per_epoch == 0;
    const bool eval_now =
        eval_ds && epoch_end &&
        ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) || step + 1 == total_steps);
    if (eval_now) {
      const double acc =
          eval_classification(out.model, out.head, *eval_ds, cfg.eval_ratio(), 128, cfg.norm_mean, cfg.norm_std);
      out.final_eval_acc = acc;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%.6f", acc);
      metrics << buf;
    }
    metrics << '\n';
  }
  out.steps = total_steps;
  out.rng_state = it.rng_state();
  return out;
}

// Teacher recipe: ratio-1 data, CosFace only.
inline TrainedModel train_teacher(const RunConfig& cfg, const Dataset& train, const Dataset* eval_ds,
                                  std::ostream& metrics) {
  RunConfig tcfg = cfg;
  tcfg.distill.kind = DistillKind::none;
  tcfg.resolution = ResolutionSetting{ResolutionMode::single, {1}};
  return train_loop(tcfg, train, eval_ds, nullptr, metrics);
}

// Student recipe: teacher forwards HR in eval mode, student trains on LR.
inline TrainedModel train_student(const RunConfig& cfg, const Dataset& train, const Dataset* eval_ds,
                                  Backbone* teacher, std::ostream& metrics) {
  return train_loop(cfg, train, eval_ds, teacher, metrics);
}

}  // namespace fskd
