#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgan/rng.hpp"

namespace cgan {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// Shapes are row-major extents, rank <= 4. Image data is [batch, height,
// width, channels] with channels contiguous.
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& s, const char* who) {
  if (s.empty() || s.size() > 4) fail(std::string(who) + ": rank must be 1..4, got " + to_string(s));
  for (int d : s)
    if (d < 1) fail(std::string(who) + ": extents must be >= 1, got " + to_string(s));
}

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;          // empty until backward touches it
  bool requires_grad = false;   // leaf parameter flag
  bool produced = false;        // set when an op wrote this under a recording tape
};

// Shared handle to a tensor node. Copies alias the same storage; clone()
// gives an independent leaf.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(const Shape& shape) {
    check_shape_valid(shape, "create");
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = shape;
    t.n_->data.assign(static_cast<size_t>(numel(shape)), T(0));
    return t;
  }

  static Tensor constant(const Shape& shape, T value) {
    Tensor t = zeros(shape);
    std::fill(t.n_->data.begin(), t.n_->data.end(), value);
    return t;
  }

  static Tensor normal(const Shape& shape, T mean, T stddev, uint64_t seed) {
    if (stddev < T(0)) fail("create: normal stddev must be >= 0");
    Tensor t = zeros(shape);
    Rng rng(seed);
    for (T& x : t.n_->data) x = mean + stddev * static_cast<T>(rng.normal());
    return t;
  }

  static Tensor from(const Shape& shape, std::vector<T> data) {
    check_shape_valid(shape, "create");
    if (static_cast<int64_t>(data.size()) != numel(shape))
      fail("create: data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = shape;
    t.n_->data = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool valid() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(n_->data.size()); }

  T* data() { return n_->data.data(); }
  const T* data() const { return n_->data.data(); }
  std::vector<T>& vec() { return n_->data; }
  const std::vector<T>& vec() const { return n_->data; }

  T item() const {
    if (size() != 1) fail("item: tensor is not scalar, shape " + to_string(shape()));
    return n_->data[0];
  }

  T& at(std::initializer_list<int> idx) {
    return n_->data[static_cast<size_t>(flat_index(idx))];
  }
  T at(std::initializer_list<int> idx) const {
    return n_->data[static_cast<size_t>(flat_index(idx))];
  }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (n_->grad.empty()) fail("grad: no gradient recorded for this tensor");
    return n_->grad;
  }
  std::vector<T>& ensure_grad() {
    if (n_->grad.empty()) n_->grad.assign(n_->data.size(), T(0));
    return n_->grad;
  }
  void clear_grad() { n_->grad.clear(); }

  // independent leaf copy (no grad, no graph history)
  Tensor clone() const {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

  std::shared_ptr<TensorNode<T>> node() const { return n_; }

 private:
  int64_t flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) fail("at: index rank mismatch");
    int64_t f = 0;
    int i = 0;
    for (int v : idx) {
      if (v < 0 || v >= dim(i)) fail("at: index out of range");
      f = f * dim(i) + v;
      ++i;
    }
    return f;
  }

  std::shared_ptr<TensorNode<T>> n_;
};

// Execution tape. Ops append their backward rule in execution order, so a
// single reverse sweep visits each rule after all rules that consumed its
// output. backward() may run once per recorded graph; reset() starts a new
// graph.
template <class T>
class Tape {
 public:
  void record(std::function<void()> step) {
    if (recording_) steps_.push_back(std::move(step));
  }

  bool recording() const { return recording_; }
  void set_recording(bool b) { recording_ = b; }

  size_t size() const { return steps_.size(); }

  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) fail("backward: loss must be scalar, shape " + to_string(loss.shape()));
    if (steps_.empty()) fail("backward: tape is empty");
    if (consumed_) fail("backward: tape already consumed; call reset() before reusing");
    auto& g = const_cast<Tensor<T>&>(loss).ensure_grad();
    g[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  void reset() {
    steps_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> steps_;
  bool recording_ = true;
  bool consumed_ = false;
};

// Scoped "no autograd" region.
template <class T>
class NoGrad {
 public:
  explicit NoGrad(Tape<T>& tape) : tape_(tape), prev_(tape.recording()) { tape_.set_recording(false); }
  ~NoGrad() { tape_.set_recording(prev_); }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape<T>& tape_;
  bool prev_;
};

namespace detail {

template <class T>
bool tracked(const Tensor<T>& t) {
  return t.node()->requires_grad || t.node()->produced;
}

template <class T>
bool grad_flows(const std::shared_ptr<TensorNode<T>>& out) {
  return !out->grad.empty();
}

template <class T>
void accumulate(const std::shared_ptr<TensorNode<T>>& n, int64_t i, T v) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
  n->grad[static_cast<size_t>(i)] += v;
}

// How a second operand lines up against the first. Besides equal shapes we
// support a rank-1 tensor broadcast along the last axis (bias patterns) and
// a scalar.
enum class Bcast { kSame, kLastDim, kScalar };

template <class T>
Bcast resolve_bcast(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.size() == 1) return Bcast::kScalar;
  if (b.rank() == 1 && b.dim(0) == a.dim(a.rank() - 1)) return Bcast::kLastDim;
  fail(std::string(who) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
int64_t bcast_index(Bcast m, int64_t i, int64_t last) {
  switch (m) {
    case Bcast::kSame: return i;
    case Bcast::kScalar: return 0;
    case Bcast::kLastDim: return i % last;
  }
  return 0;
}

template <class T, class Fwd, class Bwd>
Tensor<T> unary_op(Tape<T>& tape, const Tensor<T>& a, Fwd fwd, Bwd dydx) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* x = a.data();
  T* y = out.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  if (tape.recording() && tracked(a)) {
    out.node()->produced = true;
    auto an = a.node();
    auto on = out.node();
    tape.record([an, on, dydx, n]() {
      if (!grad_flows(on)) return;
      const bool leaf_skip = !an->requires_grad && !an->produced;
      if (leaf_skip) return;
      if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
      for (int64_t i = 0; i < n; ++i)
        an->grad[static_cast<size_t>(i)] +=
            on->grad[static_cast<size_t>(i)] * dydx(an->data[static_cast<size_t>(i)], on->data[static_cast<size_t>(i)]);
    });
  }
  return out;
}

}  // namespace detail

// ---- elementwise ops --------------------------------------------------

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  using detail::Bcast;
  Bcast m = detail::resolve_bcast(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size(), last = a.dim(a.rank() - 1);
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] + b.data()[detail::bcast_index<T>(m, i, last)];
  if (tape.recording() && (detail::tracked(a) || detail::tracked(b))) {
    out.node()->produced = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    tape.record([an, bn, on, m, n, last]() {
      if (!detail::grad_flows(on)) return;
      if (an->requires_grad || an->produced)
        for (int64_t i = 0; i < n; ++i) detail::accumulate(an, i, on->grad[static_cast<size_t>(i)]);
      if (bn->requires_grad || bn->produced)
        for (int64_t i = 0; i < n; ++i)
          detail::accumulate(bn, detail::bcast_index<T>(m, i, last), on->grad[static_cast<size_t>(i)]);
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  using detail::Bcast;
  Bcast m = detail::resolve_bcast(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size(), last = a.dim(a.rank() - 1);
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] - b.data()[detail::bcast_index<T>(m, i, last)];
  if (tape.recording() && (detail::tracked(a) || detail::tracked(b))) {
    out.node()->produced = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    tape.record([an, bn, on, m, n, last]() {
      if (!detail::grad_flows(on)) return;
      if (an->requires_grad || an->produced)
        for (int64_t i = 0; i < n; ++i) detail::accumulate(an, i, on->grad[static_cast<size_t>(i)]);
      if (bn->requires_grad || bn->produced)
        for (int64_t i = 0; i < n; ++i)
          detail::accumulate(bn, detail::bcast_index<T>(m, i, last), -on->grad[static_cast<size_t>(i)]);
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  using detail::Bcast;
  Bcast m = detail::resolve_bcast(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size(), last = a.dim(a.rank() - 1);
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] * b.data()[detail::bcast_index<T>(m, i, last)];
  if (tape.recording() && (detail::tracked(a) || detail::tracked(b))) {
    out.node()->produced = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    tape.record([an, bn, on, m, n, last]() {
      if (!detail::grad_flows(on)) return;
      if (an->requires_grad || an->produced)
        for (int64_t i = 0; i < n; ++i) {
          const int64_t j = detail::bcast_index<T>(m, i, last);
          detail::accumulate(an, i, on->grad[static_cast<size_t>(i)] * bn->data[static_cast<size_t>(j)]);
        }
      if (bn->requires_grad || bn->produced)
        for (int64_t i = 0; i < n; ++i) {
          const int64_t j = detail::bcast_index<T>(m, i, last);
          detail::accumulate(bn, j, on->grad[static_cast<size_t>(i)] * an->data[static_cast<size_t>(i)]);
        }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T c) {
  return detail::unary_op(
      tape, a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, T c) {
  return detail::unary_op(
      tape, a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> log(Tape<T>& tape, const Tensor<T>& a) {
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i)
    if (!(a.data()[i] > T(0)))
      fail("log: non-positive input " + std::to_string(static_cast<double>(a.data()[i])) +
           " at index " + std::to_string(i));
  return detail::unary_op(
      tape, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& a) {
  return detail::unary_op(
      tape, a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& a) {
  auto fwd = [](T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  };
  return detail::unary_op(tape, a, fwd, [](T, T y) { return y * (T(1) - y); });
}

// subgradient at 0 uses the negative-side slope
template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a) {
  return detail::unary_op(
      tape, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& a, T alpha) {
  return detail::unary_op(
      tape, a, [alpha](T x) { return x > T(0) ? x : alpha * x; },
      [alpha](T x, T) { return x > T(0) ? T(1) : alpha; });
}

template <class T>
Tensor<T> softplus(Tape<T>& tape, const Tensor<T>& a) {
  auto fwd = [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); };
  auto bwd = [](T x, T) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  };
  return detail::unary_op(tape, a, fwd, bwd);
}

template <class T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a) {
  return detail::unary_op(
      tape, a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> clamp(Tape<T>& tape, const Tensor<T>& a, T lo, T hi) {
  return detail::unary_op(
      tape, a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---- matmul -------------------------------------------------------------

namespace detail {

// c[M,N] += a[M,K] * b[K,N], row-major. The i-k-j order keeps the inner loop
// contiguous in both b and c.
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const T* ai = a + i * K;
    T* ci = c + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const T aik = ai[k];
      const T* bk = b + k * N;
      for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[K,N] += a^T * b where a is [M,K], b is [M,N]
template <class T>
void gemm_tn(const T* __restrict a, const T* __restrict b, T* __restrict c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const T* ai = a + i * K;
    const T* bi = b + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const T aik = ai[k];
      T* ck = c + k * N;
      for (int64_t j = 0; j < N; ++j) ck[j] += aik * bi[j];
    }
  }
}

template <class T>
std::vector<T> transpose(const T* a, int64_t rows, int64_t cols) {
  std::vector<T> t(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) t[static_cast<size_t>(j * rows + i)] = a[i * cols + j];
  return t;
}

}  // namespace detail

template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail("matmul: operands must be rank 2, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  if (a.dim(1) != b.dim(0))
    fail("matmul: inner extents differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(M), static_cast<int>(N)});
  detail::gemm_nn(a.data(), b.data(), out.data(), M, K, N);
  if (tape.recording() && (detail::tracked(a) || detail::tracked(b))) {
    out.node()->produced = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    tape.record([an, bn, on, M, K, N]() {
      if (!detail::grad_flows(on)) return;
      const T* g = on->grad.data();
      if (an->requires_grad || an->produced) {
        if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        // dA += dC * B^T
        std::vector<T> bt = detail::transpose(bn->data.data(), K, N);
        detail::gemm_nn(g, bt.data(), an->grad.data(), M, N, K);
      }
      if (bn->requires_grad || bn->produced) {
        if (bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
        // dB += A^T * dC
        detail::gemm_tn(an->data.data(), g, bn->grad.data(), M, K, N);
      }
    });
  }
  return out;
}

// ---- concat / slice over the channel axis -------------------------------

template <class T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (parts[0].rank() != 4) fail("concat_channels: inputs must be rank 4, got " + to_string(s0));
  int ctotal = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.dim(0) != s0[0] || p.dim(1) != s0[1] || p.dim(2) != s0[2])
      fail("concat_channels: batch/spatial mismatch " + to_string(s0) + " vs " + to_string(p.shape()));
    ctotal += p.dim(3);
  }
  const int64_t npix = static_cast<int64_t>(s0[0]) * s0[1] * s0[2];
  Tensor<T> out = Tensor<T>::zeros({s0[0], s0[1], s0[2], ctotal});
  T* dst = out.data();
  for (int64_t p = 0; p < npix; ++p) {
    T* row = dst + p * ctotal;
    for (const auto& part : parts) {
      const int c = part.dim(3);
      const T* src = part.data() + p * c;
      std::copy(src, src + c, row);
      row += c;
    }
  }
  bool any = false;
  for (const auto& p : parts) any = any || detail::tracked(p);
  if (tape.recording() && any) {
    out.node()->produced = true;
    std::vector<std::shared_ptr<TensorNode<T>>> pn;
    pn.reserve(parts.size());
    for (const auto& p : parts) pn.push_back(p.node());
    auto on = out.node();
    tape.record([pn, on, npix, ctotal]() {
      if (!detail::grad_flows(on)) return;
      const T* g = on->grad.data();
      int64_t off = 0;
      for (const auto& n : pn) {
        const int c = n->shape[3];
        if (n->requires_grad || n->produced) {
          if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
          for (int64_t p = 0; p < npix; ++p) {
            const T* gr = g + p * ctotal + off;
            T* dg = n->grad.data() + p * c;
            for (int i = 0; i < c; ++i) dg[i] += gr[i];
          }
        }
        off += c;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& a, int c0, int c1) {
  if (a.rank() != 4) fail("slice_channels: input must be rank 4");
  const int C = a.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) fail("slice_channels: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") for C=" + std::to_string(C));
  const int cw = c1 - c0;
  const int64_t npix = static_cast<int64_t>(a.dim(0)) * a.dim(1) * a.dim(2);
  Tensor<T> out = Tensor<T>::zeros({a.dim(0), a.dim(1), a.dim(2), cw});
  for (int64_t p = 0; p < npix; ++p) {
    const T* src = a.data() + p * C + c0;
    std::copy(src, src + cw, out.data() + p * cw);
  }
  if (tape.recording() && detail::tracked(a)) {
    out.node()->produced = true;
    auto an = a.node(), on = out.node();
    tape.record([an, on, npix, C, c0, cw]() {
      if (!detail::grad_flows(on)) return;
      if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
      for (int64_t p = 0; p < npix; ++p) {
        const T* g = on->grad.data() + p * cw;
        T* dg = an->grad.data() + p * C + c0;
        for (int i = 0; i < cw; ++i) dg[i] += g[i];
      }
    });
  }
  return out;
}

// ---- reductions ----------------------------------------------------------

namespace detail {

inline void check_axes(const Shape& shape, std::vector<int>& axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int ax : axes)
    if (ax < 0 || ax >= static_cast<int>(shape.size()))
      fail("reduce: invalid axis " + std::to_string(ax) + " for shape " + to_string(shape));
}

// Maps each flat input index to the flat output index with `axes` removed.
inline int64_t reduced_index(const Shape& shape, const std::vector<int>& axes, int64_t flat) {
  int64_t out = 0;
  int64_t rem = flat;
  // recover coordinates, most-significant first
  for (int d = 0; d < static_cast<int>(shape.size()); ++d) {
    int64_t stride = 1;
    for (int e = d + 1; e < static_cast<int>(shape.size()); ++e) stride *= shape[static_cast<size_t>(e)];
    const int64_t coord = rem / stride;
    rem %= stride;
    if (std::find(axes.begin(), axes.end(), d) == axes.end()) {
      int64_t ostride = 1;
      for (int e = d + 1; e < static_cast<int>(shape.size()); ++e)
        if (std::find(axes.begin(), axes.end(), e) == axes.end()) ostride *= shape[static_cast<size_t>(e)];
      out += coord * ostride;
    }
  }
  return out;
}

template <class T>
Tensor<T> reduce_impl(Tape<T>& tape, const Tensor<T>& a, std::vector<int> axes, bool mean) {
  const bool full = axes.empty();
  if (!full) check_axes(a.shape(), axes);
  Shape oshape;
  int64_t count = 1;
  if (full) {
    oshape = {1};
    count = a.size();
  } else {
    for (int d = 0; d < a.rank(); ++d) {
      if (std::find(axes.begin(), axes.end(), d) == axes.end())
        oshape.push_back(a.dim(d));
      else
        count *= a.dim(d);
    }
    if (oshape.empty()) oshape = {1};
  }
  Tensor<T> out = Tensor<T>::zeros(oshape);
  // double accumulation keeps large float reductions honest
  std::vector<double> acc(static_cast<size_t>(numel(oshape)), 0.0);
  const int64_t n = a.size();
  if (full) {
    for (int64_t i = 0; i < n; ++i) acc[0] += static_cast<double>(a.data()[i]);
  } else {
    for (int64_t i = 0; i < n; ++i)
      acc[static_cast<size_t>(reduced_index(a.shape(), axes, i))] += static_cast<double>(a.data()[i]);
  }
  const double inv = mean ? 1.0 / static_cast<double>(count) : 1.0;
  for (size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<T>(acc[i] * inv);
  if (tape.recording() && detail::tracked(a)) {
    out.node()->produced = true;
    auto an = a.node(), on = out.node();
    const Shape ashape = a.shape();
    tape.record([an, on, ashape, axes, full, n, inv]() {
      if (!detail::grad_flows(on)) return;
      if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
      if (full) {
        const T g = static_cast<T>(static_cast<double>(on->grad[0]) * inv);
        for (int64_t i = 0; i < n; ++i) an->grad[static_cast<size_t>(i)] += g;
      } else {
        for (int64_t i = 0; i < n; ++i) {
          const int64_t j = reduced_index(ashape, axes, i);
          an->grad[static_cast<size_t>(i)] += static_cast<T>(static_cast<double>(on->grad[static_cast<size_t>(j)]) * inv);
        }
      }
    });
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> reduce_sum(Tape<T>& tape, const Tensor<T>& a, std::vector<int> axes = {}) {
  return detail::reduce_impl(tape, a, std::move(axes), false);
}

template <class T>
Tensor<T> reduce_mean(Tape<T>& tape, const Tensor<T>& a, std::vector<int> axes = {}) {
  return detail::reduce_impl(tape, a, std::move(axes), true);
}

// ---- reshape --------------------------------------------------------------

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, const Shape& shape) {
  check_shape_valid(shape, "reshape");
  if (numel(shape) != a.size())
    fail("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  Tensor<T> out = Tensor<T>::from(shape, a.vec());
  if (tape.recording() && detail::tracked(a)) {
    out.node()->produced = true;
    auto an = a.node(), on = out.node();
    tape.record([an, on]() {
      if (!detail::grad_flows(on)) return;
      if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t.data()[i]))) return false;
  return true;
}

}  // namespace cgan
