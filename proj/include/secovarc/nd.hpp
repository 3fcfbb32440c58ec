#pragma once

// Dense float64 tensors with a reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, clone() makes a
// deep copy. Operations take the Tape they record on as their first argument.
// An operation is recorded only when the tape is enabled and at least one input
// requires a gradient; its output then requires a gradient as well.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secovarc/rng.hpp"

namespace secovarc::nd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  // Leading extent for rank 2, 1 otherwise.
  std::size_t rows() const;
  // Trailing extent (1 for scalars).
  std::size_t cols() const;

  // Handle semantics: a const Tensor still refers to mutable storage.
  std::span<double> data() const { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Allocated as zeros on first access. Writable through a const handle,
  // since the gradient buffer belongs to the shared storage.
  std::span<double> grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    mutable std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

// Receives the gradient of the loss with respect to the entry's output and
// accumulates into the inputs that require gradients.
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  std::size_t size() const { return entries_.size(); }

  // Returns whether an op over `inputs` should record; when true the caller
  // builds its output with requires_grad set and calls record().
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  bool tracks(std::span<const Tensor> inputs) const;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward);

  // Seeds d loss / d loss = 1 and replays entries in reverse creation order.
  // Gradients accumulate; zero them between steps.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  bool enabled_;
  std::vector<Entry> entries_;
};

enum class Elementwise { kTanh, kSigmoid, kAbs, kHadamard, kAdd, kSub };

Elementwise parse_elementwise(std::string_view name);
bool is_binary(Elementwise kind);

enum class Mode { kTrain, kEval };

// Y = X W + b with X [m x k] (or [k]), W [k x n], b [n].
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
// Y = X W^T + b with W [n x k]; b may be undefined.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor elementwise(Tape& tape, Elementwise kind, const Tensor& a,
                   const Tensor& b = {});
inline Tensor tanh(Tape& t, const Tensor& a) {
  return elementwise(t, Elementwise::kTanh, a);
}
inline Tensor sigmoid(Tape& t, const Tensor& a) {
  return elementwise(t, Elementwise::kSigmoid, a);
}
inline Tensor abs(Tape& t, const Tensor& a) {
  return elementwise(t, Elementwise::kAbs, a);
}
inline Tensor hadamard(Tape& t, const Tensor& a, const Tensor& b) {
  return elementwise(t, Elementwise::kHadamard, a, b);
}
inline Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  return elementwise(t, Elementwise::kAdd, a, b);
}
inline Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  return elementwise(t, Elementwise::kSub, a, b);
}

Tensor scale(Tape& tape, const Tensor& x, double factor);

// Joins vectors ([d] or [1 x d]) along the last axis. Output rank follows the
// first part.
Tensor concat(Tape& tape, std::span<const Tensor> parts);
inline Tensor concat(Tape& tape, std::initializer_list<Tensor> parts) {
  return concat(tape, std::span<const Tensor>(parts.begin(), parts.size()));
}

// Same data under a new shape of equal size.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Column range [offset, offset + len) of a vector.
Tensor slice(Tape& tape, const Tensor& x, std::size_t offset, std::size_t len);
// Row `index` of a matrix as a vector.
Tensor row(Tape& tape, const Tensor& x, std::size_t index);
// Rows [0, count) of a matrix.
Tensor head_rows(Tape& tape, const Tensor& x, std::size_t count);
// Stacks equal-width vectors into [total_rows x d]; rows past rows.size() are 0.
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows,
                  std::size_t total_rows);
// Rows `ids` of `table` [V x d] as an [n x d] matrix.
Tensor gather_rows(Tape& tape, const Tensor& table,
                   std::span<const int> ids);

// Reductions over the first valid_len rows of H [n x d]; each returns [d].
Tensor masked_max_pool(Tape& tape, const Tensor& h, std::size_t valid_len);
Tensor last_pool(Tape& tape, const Tensor& h, std::size_t valid_len);
Tensor masked_mean_pool(Tape& tape, const Tensor& h, std::size_t valid_len);

// Inverted dropout: survivors are scaled by 1 / (1 - p) in train mode.
Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng);

Tensor sum(Tape& tape, const Tensor& x);
Tensor squared_norm(Tape& tape, const Tensor& x);

// Mean binary cross-entropy of probabilities against 0/1 targets. Probabilities
// are clamped to [clamp, 1 - clamp] before the logs; the clamp passes no
// gradient where it is active.
Tensor binary_cross_entropy(Tape& tape, const Tensor& probs,
                            std::span<const double> targets,
                            double clamp = 1e-12);

// Max relative error between tape gradients and central differences over every
// coordinate of `params`. The function must build its loss on the tape it is
// handed and be deterministic across calls.
double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> params, double eps = 1e-5);

}  // namespace secovarc::nd
