#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/core/ops.hpp"
#include "fskd/core/random.hpp"
#include "fskd/core/tensor.hpp"
#include "fskd/model/layers.hpp"

namespace fskd {

// Residual CNN with one feature tap per stage. Stage i halves the spatial
// size on entry, so an input of 32 with widths (16,32,64) yields taps of
// spatial size 16, 8, 4.
struct BackboneConfig {
  std::vector<std::size_t> block_channel_widths{16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t embedding_dim = 128;
  std::size_t input_size = 32;
  std::size_t in_channels = 1;

  std::size_t num_blocks() const { return block_channel_widths.size(); }

  void validate() const {
    if (block_channel_widths.size() < 2) throw ConfigError("backbone: need at least 2 stages");
    for (auto w : block_channel_widths)
      if (w == 0) throw ConfigError("backbone: zero channel width");
    if (blocks_per_stage == 0) throw ConfigError("backbone: blocks_per_stage must be positive");
    if (embedding_dim < 8) throw ConfigError("backbone: embedding_dim must be >= 8");
    if (in_channels == 0) throw ConfigError("backbone: in_channels must be positive");
    const std::size_t shrink = std::size_t{1} << block_channel_widths.size();
    if (input_size < shrink || input_size % shrink != 0)
      throw ConfigError("backbone: input_size " + std::to_string(input_size) + " not divisible by 2^L = " +
                        std::to_string(shrink));
  }

  bool operator==(const BackboneConfig&) const = default;
};

struct ResidualBlock {
  Conv2dLayer conv1, conv2;
  BatchNormLayer bn1, bn2;
  std::optional<Conv2dLayer> down;
  std::optional<BatchNormLayer> down_bn;

  ResidualBlock() = default;
  ResidualBlock(std::size_t in_ch, std::size_t out_ch, bool downsample, Rng& rng) {
    const std::size_t stride = downsample ? 2 : 1;
    conv1 = Conv2dLayer(out_ch, in_ch, 3, stride, 1, rng);
    bn1 = BatchNormLayer(out_ch);
    conv2 = Conv2dLayer(out_ch, out_ch, 3, 1, 1, rng);
    bn2 = BatchNormLayer(out_ch);
    if (downsample || in_ch != out_ch) {
      down = Conv2dLayer(out_ch, in_ch, 1, stride, 0, rng);
      down_bn = BatchNormLayer(out_ch);
    }
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor h = relu(bn1.forward(conv1.forward(x), training));
    h = bn2.forward(conv2.forward(h), training);
    Tensor shortcut = down ? down_bn->forward(down->forward(x), training) : x;
    return relu(add(h, shortcut));
  }
};

struct ForwardResult {
  Tensor embedding;            // N x d
  std::vector<Tensor> taps;    // L entries, tap i is N x C_i x H_i x W_i
};

class Backbone {
 public:
  Backbone() = default;
  // Parameters are shared handles; copying would alias two models.
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;
  Backbone(Backbone&&) = default;
  Backbone& operator=(Backbone&&) = default;

  Backbone(const BackboneConfig& config, std::uint64_t seed) : cfg_(config) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x6261636bULL));
    stem_ = Conv2dLayer(cfg_.block_channel_widths[0], cfg_.in_channels, 3, 1, 1, rng);
    stem_bn_ = BatchNormLayer(cfg_.block_channel_widths[0]);
    std::size_t in_ch = cfg_.block_channel_widths[0];
    for (std::size_t s = 0; s < cfg_.block_channel_widths.size(); ++s) {
      const std::size_t out_ch = cfg_.block_channel_widths[s];
      std::vector<ResidualBlock> stage;
      for (std::size_t b = 0; b < cfg_.blocks_per_stage; ++b) {
        stage.emplace_back(b == 0 ? in_ch : out_ch, out_ch, /*downsample=*/b == 0, rng);
      }
      stages_.push_back(std::move(stage));
      in_ch = out_ch;
    }
    embed_ = LinearLayer(in_ch, cfg_.embedding_dim, rng);
  }

  const BackboneConfig& config() const { return cfg_; }

  ForwardResult forward_with_taps(const Tensor& batch, bool training) {
    if (batch.rank() != 4 || batch.dim(1) != cfg_.in_channels || batch.dim(2) != cfg_.input_size ||
        batch.dim(3) != cfg_.input_size)
      throw ShapeError("backbone: expected batch of shape (N," + std::to_string(cfg_.in_channels) + "," +
                       std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) + "), got " +
                       shape_str(batch.shape()));
    ForwardResult result;
    Tensor h = relu(stem_bn_.forward(stem_.forward(batch), training));
    for (auto& stage : stages_) {
      for (auto& block : stage) h = block.forward(h, training);
      result.taps.push_back(h);
    }
    result.embedding = embed_.forward(global_avg_pool(h));
    return result;
  }

  // Registries are rebuilt per call so they stay valid across moves.
  std::vector<std::pair<std::string, Tensor>> named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit_layers([&](const std::string& name, Conv2dLayer& c) { out.emplace_back(name + ".w", c.weight); },
                 [&](const std::string& name, BatchNormLayer& bn) {
                   out.emplace_back(name + ".gamma", bn.gamma);
                   out.emplace_back(name + ".beta", bn.beta);
                 });
    out.emplace_back("embed.w", embed_.weight);
    return out;
  }

  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    visit_layers([&](const std::string&, Conv2dLayer&) {},
                 [&](const std::string& name, BatchNormLayer& bn) {
                   out.emplace_back(name + ".running_mean", &bn.running_mean);
                   out.emplace_back(name + ".running_var", &bn.running_var);
                 });
    return out;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.size();
    return n;
  }

 private:
  template <typename ConvFn, typename BnFn>
  void visit_layers(ConvFn conv_fn, BnFn bn_fn) {
    conv_fn("stem.conv", stem_);
    bn_fn("stem.bn", stem_bn_);
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b) {
        const std::string p = "stage" + std::to_string(s) + ".block" + std::to_string(b);
        auto& blk = stages_[s][b];
        conv_fn(p + ".conv1", blk.conv1);
        bn_fn(p + ".bn1", blk.bn1);
        conv_fn(p + ".conv2", blk.conv2);
        bn_fn(p + ".bn2", blk.bn2);
        if (blk.down) {
          conv_fn(p + ".down", *blk.down);
          bn_fn(p + ".down_bn", *blk.down_bn);
        }
      }
  }

  BackboneConfig cfg_;
  Conv2dLayer stem_;
  BatchNormLayer stem_bn_;
  std::vector<std::vector<ResidualBlock>> stages_;
  LinearLayer embed_;
};

inline Backbone build_backbone(const BackboneConfig& config, std::uint64_t seed) { return Backbone(config, seed); }

}  // namespace fskd
