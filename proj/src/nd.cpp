#include "secovarc/nd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace secovarc::nd {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_size(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::size_t Tensor::rows() const {
  return impl_->shape.size() == 2 ? impl_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  return impl_->shape.empty() ? 1 : impl_->shape.back();
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

std::span<double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Tape

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool Tape::tracks(std::span<const Tensor> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
    return t.defined() && t.requires_grad();
  });
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs,
                  Tensor output, BackwardFn backward) {
  entries_.push_back(
      {op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     shape_str(loss.shape()));
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Four interleaved partial sums; the fixed order keeps results reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

std::string pair_str(const Tensor& a, const Tensor& b) {
  return shape_str(a.shape()) + " and " + shape_str(b.shape());
}

// A vector is rank 1 or a single row.
bool is_vector(const Tensor& t) {
  return t.rank() == 1 || (t.rank() == 2 && t.shape()[0] == 1);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Elementwise parse_elementwise(std::string_view name) {
  if (name == "tanh") return Elementwise::kTanh;
  if (name == "sigmoid") return Elementwise::kSigmoid;
  if (name == "abs") return Elementwise::kAbs;
  if (name == "hadamard") return Elementwise::kHadamard;
  if (name == "add") return Elementwise::kAdd;
  if (name == "sub") return Elementwise::kSub;
  throw std::invalid_argument("unknown elementwise kind '" + std::string(name) +
                              "'");
}

bool is_binary(Elementwise kind) {
  return kind == Elementwise::kHadamard || kind == Elementwise::kAdd ||
         kind == Elementwise::kSub;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(w.rank() == 2, "affine weight must be a matrix, got " +
                             shape_str(w.shape()));
  const std::size_t k = w.shape()[0];
  const std::size_t n = w.shape()[1];
  require(x.rank() >= 1 && x.rank() <= 2 && x.cols() == k,
          "affine: input " + shape_str(x.shape()) + " does not match weight " +
              shape_str(w.shape()));
  require(b.rank() == 1 && b.size() == n,
          "affine: bias " + shape_str(b.shape()) + " does not match weight " +
              shape_str(w.shape()));
  const std::size_t m = x.rows();
  const bool track = tape.tracks({&x, &w, &b});
  Tensor y = Tensor::zeros(x.rank() == 1 ? Shape{n} : Shape{m, n}, track);
  auto X = x.data();
  auto W = w.data();
  auto B = b.data();
  auto Y = y.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* yi = Y.data() + i * n;
    std::copy(B.begin(), B.end(), yi);
    for (std::size_t t = 0; t < k; ++t) {
      const double xv = X[i * k + t];
      const double* wt = W.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) yi[j] += xv * wt[j];
    }
  }
  if (track) {
    tape.record("affine", {x, w, b}, y,
                [x, w, b, m, k, n](std::span<const double> dy) mutable {
                  if (x.requires_grad()) {
                    auto dx = x.grad();
                    auto W = w.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t t = 0; t < k; ++t) {
                        dx[i * k + t] += dot(dy.data() + i * n, W.data() + t * n, n);
                      }
                  }
                  if (w.requires_grad()) {
                    auto dw = w.grad();
                    auto X = x.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t t = 0; t < k; ++t) {
                        const double xv = X[i * k + t];
                        for (std::size_t j = 0; j < n; ++j)
                          dw[t * n + j] += xv * dy[i * n + j];
                      }
                  }
                  if (b.requires_grad()) {
                    auto db = b.grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        db[j] += dy[i * n + j];
                  }
                });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(w.rank() == 2, "linear weight must be a matrix, got " +
                             shape_str(w.shape()));
  const std::size_t n = w.shape()[0];
  const std::size_t k = w.shape()[1];
  require(x.rank() >= 1 && x.rank() <= 2 && x.cols() == k,
          "linear: input " + shape_str(x.shape()) + " does not match weight " +
              shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias) {
    require(b.rank() == 1 && b.size() == n,
            "linear: bias " + shape_str(b.shape()) +
                " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t m = x.rows();
  const bool track = tape.tracks({&x, &w, &b});
  Tensor y = Tensor::zeros(x.rank() == 1 ? Shape{n} : Shape{m, n}, track);
  auto X = x.data();
  auto W = w.data();
  auto Y = y.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = X.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* wj = W.data() + j * k;
      Y[i * n + j] = (has_bias ? b[j] : 0.0) + dot(xi, wj, k);
    }
  }
  if (track) {
    tape.record("linear", {x, w, b}, y,
                [x, w, b, m, k, n](std::span<const double> dy) mutable {
                  if (x.requires_grad()) {
                    auto dx = x.grad();
                    auto W = w.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const double g = dy[i * n + j];
                        if (g == 0.0) continue;
                        const double* wj = W.data() + j * k;
                        double* dxi = dx.data() + i * k;
                        for (std::size_t t = 0; t < k; ++t) dxi[t] += g * wj[t];
                      }
                  }
                  if (w.requires_grad()) {
                    auto dw = w.grad();
                    auto X = x.data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const double g = dy[i * n + j];
                        if (g == 0.0) continue;
                        const double* xi = X.data() + i * k;
                        double* dwj = dw.data() + j * k;
                        for (std::size_t t = 0; t < k; ++t) dwj[t] += g * xi[t];
                      }
                  }
                  if (b.defined() && b.requires_grad()) {
                    auto db = b.grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        db[j] += dy[i * n + j];
                  }
                });
  }
  return y;
}

Tensor elementwise(Tape& tape, Elementwise kind, const Tensor& a,
                   const Tensor& b) {
  const bool binary = is_binary(kind);
  if (binary) {
    require(b.defined(), "binary elementwise op needs two operands");
    require(a.shape() == b.shape(),
            "elementwise: shape mismatch " + pair_str(a, b));
  }
  const bool track = binary ? tape.tracks({&a, &b}) : tape.tracks({&a});
  Tensor y = Tensor::zeros(a.shape(), track);
  auto A = a.data();
  auto Y = y.data();
  const std::size_t n = a.size();
  switch (kind) {
    case Elementwise::kTanh:
      for (std::size_t i = 0; i < n; ++i) Y[i] = std::tanh(A[i]);
      break;
    case Elementwise::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) Y[i] = sigmoid_scalar(A[i]);
      break;
    case Elementwise::kAbs:
      for (std::size_t i = 0; i < n; ++i) Y[i] = std::fabs(A[i]);
      break;
    case Elementwise::kHadamard:
      for (std::size_t i = 0; i < n; ++i) Y[i] = A[i] * b[i];
      break;
    case Elementwise::kAdd:
      for (std::size_t i = 0; i < n; ++i) Y[i] = A[i] + b[i];
      break;
    case Elementwise::kSub:
      for (std::size_t i = 0; i < n; ++i) Y[i] = A[i] - b[i];
      break;
  }
  if (!track) return y;

  auto backward = [kind, a, b, y, n](std::span<const double> dy) mutable {
    auto A = a.data();
    auto Y = y.data();
    if (a.requires_grad()) {
      auto da = a.grad();
      switch (kind) {
        case Elementwise::kTanh:
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * (1 - Y[i] * Y[i]);
          break;
        case Elementwise::kSigmoid:
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * Y[i] * (1 - Y[i]);
          break;
        case Elementwise::kAbs:
          // Subgradient 0 at exactly 0.
          for (std::size_t i = 0; i < n; ++i)
            da[i] += A[i] > 0 ? dy[i] : (A[i] < 0 ? -dy[i] : 0.0);
          break;
        case Elementwise::kHadamard:
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * b[i];
          break;
        case Elementwise::kAdd:
        case Elementwise::kSub:
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
          break;
      }
    }
    if (b.defined() && b.requires_grad()) {
      auto db = b.grad();
      switch (kind) {
        case Elementwise::kHadamard:
          for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * A[i];
          break;
        case Elementwise::kAdd:
          for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
          break;
        case Elementwise::kSub:
          for (std::size_t i = 0; i < n; ++i) db[i] -= dy[i];
          break;
        default:
          break;
      }
    }
  };
  std::vector<Tensor> inputs{a};
  if (binary) inputs.push_back(b);
  tape.record("elementwise", std::move(inputs), y, std::move(backward));
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::zeros(x.shape(), track);
  auto X = x.data();
  auto Y = y.data();
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = X[i] * factor;
  if (track) {
    tape.record("scale", {x}, y, [x, factor](std::span<const double> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return y;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of an empty list");
  std::size_t width = 0;
  for (const Tensor& p : parts) {
    require(is_vector(p), "concat: part of shape " + shape_str(p.shape()) +
                              " is not a vector");
    width += p.size();
  }
  const bool track = tape.tracks(parts);
  Tensor y = Tensor::zeros(
      parts.front().rank() == 1 ? Shape{width} : Shape{1, width}, track);
  auto Y = y.data();
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), Y.begin() + offset);
    offset += p.size();
  }
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat", inputs, y,
                [inputs](std::span<const double> dy) mutable {
                  std::size_t off = 0;
                  for (Tensor& p : inputs) {
                    if (p.requires_grad()) {
                      auto dp = p.grad();
                      for (std::size_t i = 0; i < dp.size(); ++i)
                        dp[i] += dy[off + i];
                    }
                    off += p.size();
                  }
                });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(), "reshape " + shape_str(x.shape()) +
                                             " to " + shape_str(shape));
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::from(std::move(shape),
                          std::vector<double>(x.data().begin(), x.data().end()),
                          track);
  if (track) {
    tape.record("reshape", {x}, y, [x](std::span<const double> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t offset,
             std::size_t len) {
  require(is_vector(x) && offset + len <= x.size(),
          "slice [" + std::to_string(offset) + ", " +
              std::to_string(offset + len) + ") out of range for " +
              shape_str(x.shape()));
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::zeros({len}, track);
  std::copy_n(x.data().begin() + offset, len, y.data().begin());
  if (track) {
    tape.record("slice", {x}, y,
                [x, offset, len](std::span<const double> dy) mutable {
                  auto dx = x.grad();
                  for (std::size_t i = 0; i < len; ++i) dx[offset + i] += dy[i];
                });
  }
  return y;
}

Tensor row(Tape& tape, const Tensor& x, std::size_t index) {
  require(x.rank() == 2 && index < x.shape()[0],
          "row " + std::to_string(index) + " out of range for " +
              shape_str(x.shape()));
  const std::size_t d = x.shape()[1];
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::zeros({d}, track);
  std::copy_n(x.data().begin() + index * d, d, y.data().begin());
  if (track) {
    tape.record("row", {x}, y,
                [x, index, d](std::span<const double> dy) mutable {
                  auto dx = x.grad();
                  for (std::size_t j = 0; j < d; ++j) dx[index * d + j] += dy[j];
                });
  }
  return y;
}

Tensor head_rows(Tape& tape, const Tensor& x, std::size_t count) {
  require(x.rank() == 2 && count <= x.shape()[0],
          "head_rows(" + std::to_string(count) + ") out of range for " +
              shape_str(x.shape()));
  const std::size_t d = x.shape()[1];
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::zeros({count, d}, track);
  std::copy_n(x.data().begin(), count * d, y.data().begin());
  if (track) {
    tape.record("head_rows", {x}, y, [x](std::span<const double> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows,
                  std::size_t total_rows) {
  require(!rows.empty() && rows.size() <= total_rows,
          "stack_rows: " + std::to_string(rows.size()) + " rows into " +
              std::to_string(total_rows));
  const std::size_t d = rows.front().size();
  for (const Tensor& r : rows) {
    require(is_vector(r) && r.size() == d,
            "stack_rows: row " + shape_str(r.shape()) + " is not width " +
                std::to_string(d));
  }
  const bool track = tape.tracks(rows);
  Tensor y = Tensor::zeros({total_rows, d}, track);
  auto Y = y.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(),
              Y.begin() + i * d);
  }
  if (track) {
    std::vector<Tensor> inputs(rows.begin(), rows.end());
    tape.record("stack_rows", inputs, y,
                [inputs, d](std::span<const double> dy) mutable {
                  for (std::size_t i = 0; i < inputs.size(); ++i) {
                    if (!inputs[i].requires_grad()) continue;
                    auto dr = inputs[i].grad();
                    for (std::size_t j = 0; j < d; ++j) dr[j] += dy[i * d + j];
                  }
                });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const int> ids) {
  require(table.rank() == 2, "gather_rows: table must be a matrix, got " +
                                 shape_str(table.shape()));
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(id) +
                              " out of range for vocabulary of " +
                              std::to_string(vocab));
    }
  }
  const bool track = tape.tracks({&table});
  Tensor y = Tensor::zeros({ids.size(), d}, track);
  auto T = table.data();
  auto Y = y.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(T.begin() + static_cast<std::size_t>(ids[i]) * d, d,
                Y.begin() + i * d);
  }
  if (track) {
    std::vector<int> idx(ids.begin(), ids.end());
    tape.record("gather_rows", {table}, y,
                [table, idx, d](std::span<const double> dy) mutable {
                  auto dt = table.grad();
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    const std::size_t base = static_cast<std::size_t>(idx[i]) * d;
                    for (std::size_t j = 0; j < d; ++j) dt[base + j] += dy[i * d + j];
                  }
                });
  }
  return y;
}

namespace {

void check_valid_len(const Tensor& h, std::size_t valid_len,
                     const char* op) {
  require(h.rank() == 2, std::string(op) + ": input must be a matrix, got " +
                             shape_str(h.shape()));
  if (valid_len == 0 || valid_len > h.shape()[0]) {
    throw std::out_of_range(std::string(op) + ": valid_len " +
                            std::to_string(valid_len) + " outside [1, " +
                            std::to_string(h.shape()[0]) + "]");
  }
}

}  // namespace

Tensor masked_max_pool(Tape& tape, const Tensor& h, std::size_t valid_len) {
  check_valid_len(h, valid_len, "masked_max_pool");
  const std::size_t d = h.shape()[1];
  const bool track = tape.tracks({&h});
  Tensor y = Tensor::zeros({d}, track);
  std::vector<std::size_t> argmax(d, 0);
  auto H = h.data();
  auto Y = y.data();
  for (std::size_t j = 0; j < d; ++j) {
    double best = H[j];
    for (std::size_t t = 1; t < valid_len; ++t) {
      if (H[t * d + j] > best) {
        best = H[t * d + j];
        argmax[j] = t;
      }
    }
    Y[j] = best;
  }
  if (track) {
    tape.record("masked_max_pool", {h}, y,
                [h, argmax, d](std::span<const double> dy) mutable {
                  auto dh = h.grad();
                  for (std::size_t j = 0; j < d; ++j) dh[argmax[j] * d + j] += dy[j];
                });
  }
  return y;
}

Tensor last_pool(Tape& tape, const Tensor& h, std::size_t valid_len) {
  check_valid_len(h, valid_len, "last_pool");
  return row(tape, h, valid_len - 1);
}

Tensor masked_mean_pool(Tape& tape, const Tensor& h, std::size_t valid_len) {
  check_valid_len(h, valid_len, "masked_mean_pool");
  const std::size_t d = h.shape()[1];
  const bool track = tape.tracks({&h});
  Tensor y = Tensor::zeros({d}, track);
  auto H = h.data();
  auto Y = y.data();
  for (std::size_t t = 0; t < valid_len; ++t)
    for (std::size_t j = 0; j < d; ++j) Y[j] += H[t * d + j];
  const double inv = 1.0 / static_cast<double>(valid_len);
  for (double& v : Y) v *= inv;
  if (track) {
    tape.record("masked_mean_pool", {h}, y,
                [h, valid_len, d, inv](std::span<const double> dy) mutable {
                  auto dh = h.grad();
                  for (std::size_t t = 0; t < valid_len; ++t)
                    for (std::size_t j = 0; j < d; ++j) dh[t * d + j] += dy[j] * inv;
                });
  }
  return y;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout probability must be in [0, 1), got " +
                                std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  const bool track = tape.tracks({&x});
  Tensor y = Tensor::zeros(x.shape(), track);
  auto X = x.data();
  auto Y = y.data();
  for (std::size_t i = 0; i < mask.size(); ++i) Y[i] = X[i] * mask[i];
  if (track) {
    tape.record("dropout", {x}, y,
                [x, mask = std::move(mask)](std::span<const double> dy) mutable {
                  auto dx = x.grad();
                  for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += dy[i] * mask[i];
                });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  const bool track = tape.tracks({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc, track);
  if (track) {
    tape.record("sum", {x}, y, [x](std::span<const double> dy) mutable {
      auto dx = x.grad();
      for (double& g : dx) g += dy[0];
    });
  }
  return y;
}

Tensor squared_norm(Tape& tape, const Tensor& x) {
  const bool track = tape.tracks({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  Tensor y = Tensor::scalar(acc, track);
  if (track) {
    tape.record("squared_norm", {x}, y, [x](std::span<const double> dy) mutable {
      auto dx = x.grad();
      auto X = x.data();
      for (std::size_t i = 0; i < X.size(); ++i) dx[i] += 2.0 * X[i] * dy[0];
    });
  }
  return y;
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& probs,
                            std::span<const double> targets, double clamp) {
  require(probs.size() == targets.size() && probs.size() > 0,
          "binary_cross_entropy: " + std::to_string(probs.size()) +
              " probabilities for " + std::to_string(targets.size()) +
              " targets");
  const std::size_t n = probs.size();
  const bool track = tape.tracks({&probs});
  auto P = probs.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::clamp(P[i], clamp, 1.0 - clamp);
    acc -= targets[i] * std::log(y) + (1.0 - targets[i]) * std::log(1.0 - y);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n), track);
  if (track) {
    std::vector<double> t(targets.begin(), targets.end());
    tape.record("binary_cross_entropy", {probs}, out,
                [probs, t, clamp, n](std::span<const double> dy) mutable {
                  auto dp = probs.grad();
                  auto P = probs.data();
                  const double inv = dy[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    const double y = P[i];
                    if (y < clamp || y > 1.0 - clamp) continue;
                    dp[i] += inv * (-t[i] / y + (1.0 - t[i]) / (1.0 - y));
                  }
                });
  }
  return out;
}

double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check eps must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> ps(params.begin(), params.end());
  for (Tensor& p : ps) p.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&f]() {
    Tape off(false);
    return f(off).item();
  };
  double worst = 0.0;
  for (Tensor& p : ps) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto data = p.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = evaluate();
      data[i] = saved - eps;
      const double down = evaluate();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ga = analytic[i];
      if (std::isnan(fd) || std::isnan(ga)) {
        return std::numeric_limits<double>::infinity();
      }
      const double err =
          std::fabs(ga - fd) / std::max(1e-12, std::fabs(ga) + std::fabs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace secovarc::nd
