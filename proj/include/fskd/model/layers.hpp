#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fskd/core/ops.hpp"
#include "fskd/core/random.hpp"
#include "fskd/core/tensor.hpp"

namespace fskd {

struct Conv2dLayer {
  Tensor weight;  // O x C x KH x KW
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(std::size_t out_ch, std::size_t in_ch, std::size_t k, std::size_t stride_, std::size_t padding_,
              Rng& rng)
      : stride(stride_), padding(padding_) {
    weight = Tensor::zeros(Shape{out_ch, in_ch, k, k}, /*requires_grad=*/true);
    rng.fill_kaiming_uniform(weight.data_mut(), in_ch * k * k);
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, stride, padding); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t channels) {
    gamma = Tensor::full(Shape{channels}, 1.0, /*requires_grad=*/true);
    beta = Tensor::zeros(Shape{channels}, /*requires_grad=*/true);
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, momentum, eps, training);
  }
};

struct LinearLayer {
  Tensor weight;  // in x out

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, Rng& rng) {
    weight = Tensor::zeros(Shape{in, out}, /*requires_grad=*/true);
    rng.fill_kaiming_uniform(weight.data_mut(), in);
  }

  Tensor forward(const Tensor& x) const { return linear(x, weight); }
};

}  // namespace fskd
