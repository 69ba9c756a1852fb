#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fskd/core/error.hpp"

namespace fskd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data when requires_grad
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value handle over a shared dense array. Copies are shallow; tensors are
// treated as immutable once produced by an op, except for grad accumulation
// during a backward pass.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(shape_numel(t.impl_->shape), 0.0);
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.impl_->data) x = value;
    return t;
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return full(Shape{}, value, requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->data.size(); }

  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& data_mut() { return impl_->data; }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::vector<double>& grad_mut() {
    impl_->ensure_grad();
    return impl_->grad;
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    if (rg) impl_->ensure_grad();
  }

  void zero_grad() {
    if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  // Shares nothing with the source graph: fresh storage, no grad tracking.
  Tensor detach() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  double item() const {
    if (size() != 1) throw ShapeError("item: tensor of size " + std::to_string(size()) + " is not a scalar");
    return impl_->data[0];
  }

  bool all_finite() const {
    for (double v : impl_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Records one backward rule per executed op, in execution order. Execution
// order is a topological order of the data-flow DAG, so replaying the rules
// in reverse visits every op exactly once with its output grad complete.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> backward_rule) { nodes_.push_back(std::move(backward_rule)); }

  std::size_t size() const { return nodes_.size(); }

  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ShapeError("backward: loss does not require grad (was it recorded on this tape?)");
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void clear() { nodes_.clear(); }

  static GradTape*& active_slot() {
    thread_local GradTape* active = nullptr;
    return active;
  }
  static GradTape* active() { return active_slot(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// Installs a tape as the recording target for ops on this thread.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape) : prev_(GradTape::active_slot()) { GradTape::active_slot() = &tape; }
  ~TapeScope() { GradTape::active_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

// Disables recording for its lifetime (teacher forward, evaluation).
class NoGradScope {
 public:
  NoGradScope() : prev_(GradTape::active_slot()) { GradTape::active_slot() = nullptr; }
  ~NoGradScope() { GradTape::active_slot() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* prev_;
};

// Populates grad fields of every grad-enabled ancestor of `loss`.
inline void backward(const Tensor& loss, GradTape& tape) { tape.backward(loss); }

}  // namespace fskd
