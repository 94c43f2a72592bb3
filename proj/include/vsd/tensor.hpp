#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vsd/errors.hpp"

namespace vsd {

// (batch, channels, height, width)
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  long numel() const { return long(n) * c * h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

template <typename T>
class Tape;

// Handle to a tape-resident value. Cheap to copy; the tape owns the storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }
  const Shape& shape() const;
  std::span<T> values() const;
  std::span<T> grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Records the forward graph; replays it in reverse to accumulate gradients.
// A tape is built for one step and discarded. Single-threaded.
template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  size_t num_tensors() const { return slots_.size(); }
  size_t num_ops() const { return ops_.size(); }

  Tensor<T> leaf(const Shape& shape, std::span<const T> init = {},
                 std::string label = "leaf");

  // Accumulates gradients of a scalar root into every reachable tensor.
  void backward(const Tensor<T>& root);

  struct NonFinite {
    int id;
    std::string label;
  };
  // First tensor (in creation order) holding a NaN or infinity, if any.
  std::optional<NonFinite> first_non_finite() const;

  // Storage access for op implementations.
  Tensor<T> alloc(const Shape& shape, std::string label);
  void push_op(std::function<void(Tape&)> backward_fn);
  const Shape& shape_of(int id) const { return slots_[id].shape; }
  std::span<T> values_of(int id) {
    return {slots_[id].values.data(), slots_[id].values.size()};
  }
  std::span<const T> values_of(int id) const {
    return {slots_[id].values.data(), slots_[id].values.size()};
  }
  std::span<T> grad_of(int id) {
    return {slots_[id].grad.data(), slots_[id].grad.size()};
  }
  const std::string& label_of(int id) const { return slots_[id].label; }

 private:
  struct Slot {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty when the tape is not recording
    std::string label;
  };
  std::vector<Slot> slots_;
  std::vector<std::function<void(Tape&)>> ops_;
  bool record_ = true;
  bool backward_done_ = false;
};

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape_->shape_of(id_);
}
template <typename T>
std::span<T> Tensor<T>::values() const {
  return tape_->values_of(id_);
}
template <typename T>
std::span<T> Tensor<T>::grad() const {
  return tape_->grad_of(id_);
}

// Cross-correlation with square kernel, zero padding, stride 1 or 2.
// weights shape (Cout, Cin, k, k), bias shape (1, Cout, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride, int padding);

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& input);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, double slope);

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return leaky_relu(input, 0.0);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

// a * x + b elementwise with scalar constants.
template <typename T>
Tensor<T> scale_shift(const Tensor<T>& input, double a, double b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Value copy that blocks gradient flow.
template <typename T>
Tensor<T> detach(const Tensor<T>& input);

// Mean absolute difference. The mask (same shape, binary) restricts both the
// sum and the denominator; an all-zero mask is a degenerate input. Gradients
// flow into pred and target, not the mask. n_out reports the denominator.
template <typename T>
Tensor<T> l1_mean(const Tensor<T>& pred, const Tensor<T>& target,
                  const Tensor<T>* mask = nullptr, long* n_out = nullptr);

// Scalar sum of coeffs[i] * xs[i] over same-shape tensors.
template <typename T>
Tensor<T> linear_combination(std::span<const Tensor<T>> xs,
                             std::span<const double> coeffs);

// Scalar dot product with a constant vector; handy scalar root for tests.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& input, std::span<const T> weights);

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  long t = 0;
};

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads,
               AdamState<T>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

}  // namespace vsd
