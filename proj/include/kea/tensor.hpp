#pragma once

// Dense double-precision tensors (rank 0..2 in practice) with reverse-mode
// automatic differentiation on an explicit tape.
//
// Contract highlights:
//  - no differentiable operation mutates its inputs' data
//  - all reductions run sequentially in index order, so identical inputs
//    produce bit-identical outputs
//  - grad buffers exist exactly for tensors with requires_grad set
//  - backward(loss) zeroes the grads of tape outputs, seeds d(loss)/d(loss)=1
//    and replays the tape in reverse; leaf gradients accumulate across calls

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kea/error.hpp"
#include "kea/rng.hpp"

namespace kea {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data iff requires_grad
  bool requires_grad = false;
  Tape* tape = nullptr;  // tape that produced this tensor, when recorded
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }

  static Tensor filled(Shape shape, double v) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(shape_numel(shape), v);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double v) { return filled(Shape{}, v); }

  static Tensor from(Shape shape, std::vector<double> values) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
  }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t size() const { return impl_->data.size(); }

  // rank-2 helpers
  std::size_t rows() const { return impl_->shape[0]; }
  std::size_t cols() const { return impl_->shape[1]; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  double value() const {
    if (size() != 1) {
      throw ShapeError("value() expects a single-element tensor, got " + shape_str(shape()));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
      impl_->grad.assign(impl_->data.size(), 0.0);
    } else {
      impl_->grad.clear();
    }
    return *this;
  }

  std::vector<double>& grad() {
    require_grad_buffer();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    require_grad_buffer();
    return impl_->grad;
  }

  void zero_grad() {
    if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  // Deep copy with no grad and no tape attachment.
  Tensor clone_value() const { return Tensor::from(impl_->shape, impl_->data); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
  }

  void require_grad_buffer() const {
    if (!impl_->requires_grad) {
      throw Error("tensor has no grad buffer (requires_grad is off)");
    }
  }

  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

class Tape {
 public:
  Tape() : prev_(current_ref()) { current_ref() = this; }
  ~Tape() { current_ref() = prev_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_ref(); }

  void record(std::shared_ptr<TensorImpl> out, std::function<void()> pull) {
    out->tape = this;
    records_.push_back(Record{std::move(out), std::move(pull)});
  }

  std::size_t size() const { return records_.size(); }

  // Zero the grads of every tensor this tape produced, seed the loss with 1
  // and replay in reverse. Leaf tensors keep accumulating across calls.
  void backward_from(TensorImpl* loss) {
    for (auto& r : records_) {
      if (r.out->requires_grad) r.out->grad.assign(r.out->data.size(), 0.0);
    }
    loss->grad[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->pull();
  }

 private:
  struct Record {
    std::shared_ptr<TensorImpl> out;
    std::function<void()> pull;
  };

  static Tape*& current_ref() {
    thread_local Tape* current = nullptr;
    return current;
  }

  std::vector<Record> records_;
  Tape* prev_;
};

inline void backward(const Tensor& loss) {
  if (loss.size() != 1 || loss.rank() != 0) {
    throw ShapeError("backward expects a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad() || loss.impl()->tape == nullptr) {
    throw Error("backward: loss was not produced by tape-recorded operations");
  }
  loss.impl()->tape->backward_from(loss.impl().get());
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline bool track(const Tensor& a) { return Tape::current() != nullptr && a.requires_grad(); }

inline void mark_output(Tensor& out, std::function<void()> pull) {
  out.set_requires_grad(true);
  Tape::current()->record(out.impl(), std::move(pull));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul with numpy-style rank-1 promotion
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
    throw ShapeError("matmul: operands must be rank 1 or 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  const std::size_t m = a_vec ? 1 : a.dim(0);
  const std::size_t k = a_vec ? a.dim(0) : a.dim(1);
  const std::size_t kb = b_vec ? b.dim(0) : b.dim(0);
  const std::size_t n = b_vec ? 1 : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner extents of " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not match");
  }

  Shape out_shape;
  if (!a_vec && !b_vec) out_shape = {m, n};
  else if (a_vec && !b_vec) out_shape = {n};
  else if (!a_vec && b_vec) out_shape = {m};
  // both vectors -> scalar, shape {}

  Tensor out = Tensor::zeros(out_shape);
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
        po[i * n + j] = acc;
      }
    }
  }

  if (detail::track(a) || detail::track(b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::mark_output(out, [ai, bi, oi, m, n, k]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad.data();
        const double* pb = bi->data.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[t * n + j];
            ga[i * k + t] += acc;
          }
      }
      if (bi->requires_grad) {
        double* gb = bi->grad.data();
        const double* pa = ai->data.data();
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += pa[i * k + t] * g[i * n + j];
            gb[t * n + j] += acc;
          }
      }
    });
  }
  return out;
}

inline Tensor dot(const Tensor& a, const Tensor& b) { return matmul(a, b); }

// ---------------------------------------------------------------------------
// affine: x.W + b over the trailing axis
// ---------------------------------------------------------------------------

inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1) {
    throw ShapeError("affine: weight must be rank 2 and bias rank 1, got " +
                     shape_str(w.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t d_in = w.dim(0);
  const std::size_t d_out = w.dim(1);
  if (b.dim(0) != d_out) {
    throw ShapeError("affine: bias " + shape_str(b.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  const bool x_vec = x.rank() == 1;
  if (x.rank() < 1 || x.rank() > 2 || (x_vec ? x.dim(0) : x.dim(1)) != d_in) {
    throw ShapeError("affine: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  const std::size_t rows = x_vec ? 1 : x.dim(0);

  Tensor out = Tensor::zeros(x_vec ? Shape{d_out} : Shape{rows, d_out});
  {
    const double* px = x.data().data();
    const double* pw = w.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < d_out; ++j) {
        double acc = pb[j];
        for (std::size_t t = 0; t < d_in; ++t) acc += px[i * d_in + t] * pw[t * d_out + j];
        po[i * d_out + j] = acc;
      }
    }
  }

  if (detail::track(x) || detail::track(w) || detail::track(b)) {
    auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
    detail::mark_output(out, [xi, wi, bi, oi, rows, d_in, d_out]() {
      const double* g = oi->grad.data();
      if (xi->requires_grad) {
        double* gx = xi->grad.data();
        const double* pw = wi->data.data();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t t = 0; t < d_in; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d_out; ++j) acc += g[i * d_out + j] * pw[t * d_out + j];
            gx[i * d_in + t] += acc;
          }
      }
      if (wi->requires_grad) {
        double* gw = wi->grad.data();
        const double* px = xi->data.data();
        for (std::size_t t = 0; t < d_in; ++t)
          for (std::size_t j = 0; j < d_out; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i) acc += px[i * d_in + t] * g[i * d_out + j];
            gw[t * d_out + j] += acc;
          }
      }
      if (bi->requires_grad) {
        double* gb = bi->grad.data();
        for (std::size_t j = 0; j < d_out; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < rows; ++i) acc += g[i * d_out + j];
          gb[j] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

enum class Act { tanh, sigmoid, relu };

inline Tensor pointwise(const Tensor& x, Act kind) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  const double* px = x.data().data();
  double* po = out.data().data();
  switch (kind) {
    case Act::tanh:
      for (std::size_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < n; ++i)
        po[i] = px[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-px[i]))
                             : std::exp(px[i]) / (1.0 + std::exp(px[i]));
      break;
    case Act::relu:
      for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
      break;
  }
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, n, kind]() {
      const double* g = oi->grad.data();
      const double* y = oi->data.data();
      const double* px_ = xi->data.data();
      double* gx = xi->grad.data();
      switch (kind) {
        case Act::tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case Act::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case Act::relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += px_[i] > 0.0 ? g[i] : 0.0;
          break;
      }
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& x) { return pointwise(x, Act::tanh); }
inline Tensor sigmoid(const Tensor& x) { return pointwise(x, Act::sigmoid); }
inline Tensor relu(const Tensor& x) { return pointwise(x, Act::relu); }

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::track(a) || detail::track(b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::mark_output(out, [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += g[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bi->grad[i] += g[i];
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::track(a) || detail::track(b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::mark_output(out, [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += g[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bi->grad[i] -= g[i];
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::track(a) || detail::track(b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    detail::mark_output(out, [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += g[i] * bi->data[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bi->grad[i] += g[i] * ai->data[i];
    });
  }
  return out;
}

inline Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, n, c]() {
      for (std::size_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i] * c;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax over the trailing axis, with max subtraction
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x) {
  if (x.rank() < 1 || x.rank() > 2) {
    throw ShapeError("softmax: expects rank 1 or 2, got " + shape_str(x.shape()));
  }
  const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.dim(1);
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = px + i * cols;
    double m = r[0];
    for (std::size_t j = 1; j < cols; ++j)
      if (r[j] > m) m = r[j];
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      double e = std::exp(r[j] - m);
      po[i * cols + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < cols; ++j) po[i * cols + j] /= sum;
  }
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, rows, cols]() {
      const double* g = oi->grad.data();
      const double* y = oi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < rows; ++i) {
        double gy = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gy += g[i * cols + j] * y[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          gx[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - gy);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structure ops: concat / slice / row / stack / transpose / reshape
// ---------------------------------------------------------------------------

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rank = parts[0].rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw ShapeError("concat: unsupported rank/axis for " + shape_str(parts[0].shape()));
  }
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: mixed ranks");
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != parts[0].dim(d)) {
        throw ShapeError("concat: shapes " + shape_str(parts[0].shape()) + " and " +
                         shape_str(p.shape()) + " differ off the concat axis");
      }
    }
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.dim(axis);

  Shape out_shape = parts[0].shape();
  out_shape[axis] = total;
  Tensor out = Tensor::zeros(out_shape);

  // copy, remembering each part's offset along the axis
  std::vector<std::size_t> offsets(parts.size());
  {
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = off;
      off += parts[p].dim(axis);
    }
  }
  const std::size_t out_cols = rank == 2 ? out_shape[1] : 1;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = parts[p];
    if (rank == 1 || axis == 0) {
      const std::size_t cols = rank == 2 ? t.dim(1) : 1;
      std::size_t dst = offsets[p] * cols;
      for (std::size_t i = 0; i < t.size(); ++i) out.data()[dst + i] = t.data()[i];
    } else {  // rank 2, axis 1
      for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j)
          out.data()[i * out_cols + offsets[p] + j] = t.data()[i * t.dim(1) + j];
    }
  }

  bool any = false;
  for (const auto& p : parts) any = any || detail::track(p);
  if (any) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto oi = out.impl();
    detail::mark_output(out, [impls, offsets, oi, rank, axis, out_cols]() {
      const double* g = oi->grad.data();
      for (std::size_t p = 0; p < impls.size(); ++p) {
        auto& in = impls[p];
        if (!in->requires_grad) continue;
        if (rank == 1 || axis == 0) {
          const std::size_t cols = rank == 2 ? in->shape[1] : 1;
          std::size_t src = offsets[p] * cols;
          for (std::size_t i = 0; i < in->data.size(); ++i) in->grad[i] += g[src + i];
        } else {
          for (std::size_t i = 0; i < in->shape[0]; ++i)
            for (std::size_t j = 0; j < in->shape[1]; ++j)
              in->grad[i * in->shape[1] + j] += g[i * out_cols + offsets[p] + j];
        }
      }
    });
  }
  return out;
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const std::size_t rank = x.rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw ShapeError("slice: unsupported rank/axis for " + shape_str(x.shape()));
  }
  if (len == 0 || start + len > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t in_cols = rank == 2 ? x.dim(1) : 1;
  if (rank == 1 || axis == 0) {
    std::size_t src = start * in_cols;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[src + i];
  } else {
    for (std::size_t i = 0; i < x.dim(0); ++i)
      for (std::size_t j = 0; j < len; ++j)
        out.data()[i * len + j] = x.data()[i * in_cols + start + j];
  }
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, rank, axis, start, len, in_cols]() {
      const double* g = oi->grad.data();
      if (rank == 1 || axis == 0) {
        std::size_t dst = start * in_cols;
        for (std::size_t i = 0; i < oi->data.size(); ++i) xi->grad[dst + i] += g[i];
      } else {
        for (std::size_t i = 0; i < xi->shape[0]; ++i)
          for (std::size_t j = 0; j < len; ++j)
            xi->grad[i * in_cols + start + j] += g[i * len + j];
      }
    });
  }
  return out;
}

// row i of a rank-2 tensor, as rank 1
inline Tensor row(const Tensor& x, std::size_t i) {
  if (x.rank() != 2) throw ShapeError("row: expects rank 2, got " + shape_str(x.shape()));
  if (i >= x.dim(0)) {
    throw ShapeError("row: index " + std::to_string(i) + " out of bounds for " +
                     shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  Tensor out = Tensor::zeros({cols});
  for (std::size_t j = 0; j < cols; ++j) out.data()[j] = x.data()[i * cols + j];
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, i, cols]() {
      for (std::size_t j = 0; j < cols; ++j) xi->grad[i * cols + j] += oi->grad[j];
    });
  }
  return out;
}

inline Tensor stack_rows(const std::vector<Tensor>& rows_in) {
  if (rows_in.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t cols = rows_in[0].dim(0);
  for (const auto& r : rows_in) {
    if (r.rank() != 1 || r.dim(0) != cols) {
      throw ShapeError("stack_rows: all rows must be rank 1 of equal length");
    }
  }
  Tensor out = Tensor::zeros({rows_in.size(), cols});
  for (std::size_t i = 0; i < rows_in.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data()[i * cols + j] = rows_in[i].data()[j];
  bool any = false;
  for (const auto& r : rows_in) any = any || detail::track(r);
  if (any) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& r : rows_in) impls.push_back(r.impl());
    auto oi = out.impl();
    detail::mark_output(out, [impls, oi, cols]() {
      for (std::size_t i = 0; i < impls.size(); ++i) {
        if (!impls[i]->requires_grad) continue;
        for (std::size_t j = 0; j < cols; ++j) impls[i]->grad[j] += oi->grad[i * cols + j];
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = x.data()[i * c + j];
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, r, c]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) xi->grad[i * c + j] += oi->grad[j * r + i];
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), x.data());
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi]() {
      for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// rows of an embedding table selected by id
inline Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  }
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (std::size_t id : ids) {
    if (id >= v) {
      throw IdError("embedding: id " + std::to_string(id) + " out of range for table " +
                    shape_str(table.shape()));
    }
  }
  Tensor out = Tensor::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.data()[i * d + j] = table.data()[ids[i] * d + j];
  if (detail::track(table)) {
    auto ti = table.impl(), oi = out.impl();
    detail::mark_output(out, [ti, oi, ids, d]() {
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) ti->grad[ids[i] * d + j] += oi->grad[i * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer norm over the trailing axis
// ---------------------------------------------------------------------------

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
  if (x.rank() < 1 || x.rank() > 2) {
    throw ShapeError("layer_norm: expects rank 1 or 2, got " + shape_str(x.shape()));
  }
  const std::size_t d = x.rank() == 1 ? x.dim(0) : x.dim(1);
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw ShapeError("layer_norm: gamma/beta must be rank 1 of width " + std::to_string(d));
  }
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> inv_std(rows), xhat(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = x.data().data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += r[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (r[j] - mean) * inv_std[i];
      out.data()[i * d + j] = gamma.data()[j] * xhat[i * d + j] + beta.data()[j];
    }
  }
  if (detail::track(x) || detail::track(gamma) || detail::track(beta)) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    detail::mark_output(out, [xi, gi, bi, oi, rows, d, inv_std, xhat]() {
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < rows; ++i) {
        if (xi->requires_grad) {
          // dL/dx = (gy - mean(gy) - xhat * mean(gy * xhat)) * inv_std,
          // where gy = g * gamma
          double mean_gy = 0.0, mean_gyx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            double gy = g[i * d + j] * gi->data[j];
            mean_gy += gy;
            mean_gyx += gy * xhat[i * d + j];
          }
          mean_gy /= static_cast<double>(d);
          mean_gyx /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            double gy = g[i * d + j] * gi->data[j];
            xi->grad[i * d + j] += (gy - mean_gy - xhat[i * d + j] * mean_gyx) * inv_std[i];
          }
        }
        if (gi->requires_grad)
          for (std::size_t j = 0; j < d; ++j) gi->grad[j] += g[i * d + j] * xhat[i * d + j];
        if (bi->requires_grad)
          for (std::size_t j = 0; j < d; ++j) bi->grad[j] += g[i * d + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi]() {
      for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += oi->grad[0];
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc * inv);
  if (detail::track(x)) {
    auto xi = x.impl(), oi = out.impl();
    detail::mark_output(out, [xi, oi, inv]() {
      for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += oi->grad[0] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// mean over rows of -log softmax(logits)[label], in log-sum-exp form
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be rank 2, got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(c) + ")");
    }
  }
  const double* pz = logits.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* r = pz + i * c;
    double m = r[0];
    for (std::size_t j = 1; j < c; ++j)
      if (r[j] > m) m = r[j];
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) se += std::exp(r[j] - m);
    total += (m + std::log(se)) - r[labels[i]];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(b));
  if (detail::track(logits)) {
    auto zi = logits.impl(), oi = out.impl();
    detail::mark_output(out, [zi, oi, labels, b, c]() {
      const double g = oi->grad[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        const double* r = zi->data.data() + i * c;
        double m = r[0];
        for (std::size_t j = 1; j < c; ++j)
          if (r[j] > m) m = r[j];
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(r[j] - m);
        for (std::size_t j = 0; j < c; ++j) {
          double p = std::exp(r[j] - m) / se;
          zi->grad[i * c + j] += g * (p - (j == labels[i] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

// mean over all cells of -[t log s(z) + (1-t) log(1-s(z))], max-based stable form
inline Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets) {
  detail::check_same_shape(logits, targets, "sigmoid_bce");
  if (logits.rank() != 2) {
    throw ShapeError("sigmoid_bce: logits must be rank 2, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  for (double t : targets.data()) {
    if (t != 0.0 && t != 1.0) {
      throw LabelError("sigmoid_bce: target " + std::to_string(t) + " is not binary");
    }
  }
  const double* pz = logits.data().data();
  const double* pt = targets.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = pz[i];
    total += std::max(z, 0.0) - z * pt[i] + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (detail::track(logits)) {
    auto zi = logits.impl(), ti = targets.impl(), oi = out.impl();
    detail::mark_output(out, [zi, ti, oi, n]() {
      const double g = oi->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double z = zi->data[i];
        double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        zi->grad[i] += g * (s - ti->data[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

// uniform(-a, a) with a = sqrt(6 / (d_in + d_out)); biases start at zero
inline Tensor glorot_uniform(std::size_t d_in, std::size_t d_out, SplitMix64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
  Tensor t = Tensor::zeros({d_in, d_out});
  for (auto& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace kea
