#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/random.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/data/dataset.hpp"
#include "fskd/data/image.hpp"

namespace fskd {

enum class ResolutionMode { single, multiple };

struct ResolutionSetting {
  ResolutionMode mode = ResolutionMode::single;
  std::vector<unsigned> ratios{1};

  void validate() const {
    for (unsigned r : ratios)
      if (r != 1 && r != 2 && r != 4 && r != 8)
        throw ConfigError("resolution: ratio " + std::to_string(r) + " not in {1,2,4,8}");
    if (mode == ResolutionMode::single) {
      if (ratios.size() != 1) throw ConfigError("resolution: single mode needs exactly one ratio");
    } else {
      if (ratios.size() < 2) throw ConfigError("resolution: multiple mode needs at least two ratios");
      if (std::find(ratios.begin(), ratios.end(), 1u) == ratios.end())
        throw ConfigError("resolution: multiple mode must include ratio 1");
    }
  }
};

struct PairedBatch {
  Tensor hr, lr;  // N x C x H x W, standardized
  std::vector<int> labels;
  std::vector<unsigned> ratios_used;
  std::vector<std::size_t> indices;  // dataset sample indices

  std::size_t size() const { return labels.size(); }
};

// Pixels scaled to [0,1] then shifted/scaled by (mean, std) per channel.
inline Tensor standardize_images(const std::vector<const ImageU8*>& images, double mean = 0.5, double stddev = 0.5) {
  if (images.empty()) throw DataError("standardize: empty image list");
  const std::size_t h = images[0]->h, w = images[0]->w, c = images[0]->c;
  Tensor out = Tensor::zeros(Shape{images.size(), c, h, w});
  auto& od = out.data_mut();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageU8& img = *images[n];
    if (img.h != h || img.w != w || img.c != c) throw DataError("standardize: mixed image geometries in batch");
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < h * w; ++p)
        od[(n * c + ch) * h * w + p] = (img.pixels[p * c + ch] / 255.0 - mean) / stddev;
  }
  return out;
}

// Shuffled epoch stream of HR-LR pairs. The hr field always carries the
// ratio-1 image; lr is the degraded-and-restored pair. Incomplete trailing
// batches are dropped so batch statistics stay well defined.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, ResolutionSetting setting, std::size_t batch_size, std::uint64_t seed,
                bool augment_flip = false, double mean = 0.5, double stddev = 0.5)
      : ds_(dataset),
        setting_(std::move(setting)),
        batch_size_(batch_size),
        rng_(mix_seed(seed, 0x62617463ULL)),
        augment_flip_(augment_flip),
        mean_(mean),
        std_(stddev) {
    setting_.validate();
    if (dataset.empty()) throw DataError("batch iterator: empty dataset");
    if (batch_size < 2) throw ConfigError("batch iterator: batch_size must be >= 2");
    if (batch_size > dataset.size())
      throw ConfigError("batch iterator: batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(dataset.size()));
    order_.resize(dataset.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    start_epoch();
  }

  std::size_t batches_per_epoch() const { return ds_.size() / batch_size_; }
  std::size_t epoch() const { return epoch_; }

  std::string rng_state() const {
    std::ostringstream os;
    os << rng_.engine();
    return os.str();
  }

  PairedBatch next() {
    if (cursor_ + batch_size_ > batches_per_epoch() * batch_size_) {
      ++epoch_;
      start_epoch();
    }
    PairedBatch batch;
    std::vector<ImageU8> hr_store, lr_store;
    hr_store.reserve(batch_size_);
    lr_store.reserve(batch_size_);
    for (std::size_t i = 0; i < batch_size_; ++i) {
      const std::size_t idx = order_[cursor_++];
      const ImageSample& s = ds_.samples[idx];
      ImageU8 img = s.image;
      if (augment_flip_ && rng_.uniform(0.0, 1.0) < 0.5) img = hflip(img);
      unsigned ratio = setting_.ratios[0];
      if (setting_.mode == ResolutionMode::multiple) ratio = setting_.ratios[rng_.index(setting_.ratios.size())];
      lr_store.push_back(make_lr(img, ratio));
      hr_store.push_back(std::move(img));
      batch.labels.push_back(s.label);
      batch.ratios_used.push_back(ratio);
      batch.indices.push_back(idx);
    }
    std::vector<const ImageU8*> hr_ptrs, lr_ptrs;
    for (const auto& im : hr_store) hr_ptrs.push_back(&im);
    for (const auto& im : lr_store) lr_ptrs.push_back(&im);
    batch.hr = standardize_images(hr_ptrs, mean_, std_);
    batch.lr = standardize_images(lr_ptrs, mean_, std_);
    return batch;
  }

 private:
  void start_epoch() {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
  }

  const Dataset& ds_;
  ResolutionSetting setting_;
  std::size_t batch_size_;
  Rng rng_;
  bool augment_flip_;
  double mean_, std_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace fskd
