#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nmtk/common.hpp"
#include "nmtk/rng.hpp"

namespace nmtk {

// Dense row-major tensor with reverse-mode autodiff. Templated on the scalar
// type: float for training and decoding, double for gradient checks. Ops
// record backward closures on a thread-local tape; backward() replays the
// tape in reverse. There are no strided views, transposes materialize.

template <typename S>
struct TensorData {
  std::vector<int64_t> shape;
  std::vector<S> values;
  std::vector<S> grad;  // empty until first touched by backward()
  bool requires_grad = false;
  bool trainable = true;  // cleared by freeze_params(); the optimizer skips frozen entries

  int64_t numel() const { return static_cast<int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), S(0));
  }
  void zero_grad_buffer() { std::fill(grad.begin(), grad.end(), S(0)); }
};

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

template <typename S>
class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData<S>>()) {}

  explicit Tensor(std::vector<int64_t> shape, S fill = S(0), bool requires_grad = false)
      : d_(std::make_shared<TensorData<S>>()) {
    validate_shape(shape);
    d_->shape = std::move(shape);
    d_->values.assign(static_cast<size_t>(shape_numel(d_->shape)), fill);
    d_->requires_grad = requires_grad;
  }

  static Tensor from(std::vector<int64_t> shape, std::vector<S> values, bool requires_grad = false) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape_to_string(shape));
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  const std::vector<int64_t>& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int64_t dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return d_->numel(); }

  std::span<S> values() { return d_->values; }
  std::span<const S> values() const { return d_->values; }
  S item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  bool has_grad() const { return !d_->grad.empty(); }
  std::span<S> grad() {
    d_->ensure_grad();
    return d_->grad;
  }
  std::span<const S> grad_view() const { return d_->grad; }
  void zero_grad() { d_->zero_grad_buffer(); }

  Tensor clone() const {
    Tensor t;
    t.d_->shape = d_->shape;
    t.d_->values = d_->values;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  // Identity of the underlying buffer; shared tensors (tied weights) compare equal.
  const std::shared_ptr<TensorData<S>>& data() const { return d_; }

  bool defined() const { return !d_->shape.empty() || !d_->values.empty(); }

 private:
  static void validate_shape(const std::vector<int64_t>& shape) {
    for (int64_t d : shape)
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in shape " + shape_to_string(shape));
  }

  std::shared_ptr<TensorData<S>> d_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename S>
class Tape {
 public:
  struct Entry {
    std::shared_ptr<TensorData<S>> out;
    std::function<void()> backprop;
  };

  static Tape& instance() {
    thread_local Tape tape;
    return tape;
  }

  bool recording = true;

  void record(std::shared_ptr<TensorData<S>> out, std::function<void()> fn) {
    entries.push_back(Entry{std::move(out), std::move(fn)});
  }

  void clear() { entries.clear(); }
  size_t size() const { return entries.size(); }

  std::vector<Entry> entries;
};

template <typename S>
inline bool grad_enabled() {
  return Tape<S>::instance().recording;
}

template <typename S>
struct NoGradGuard {
  NoGradGuard() : prev_(Tape<S>::instance().recording) { Tape<S>::instance().recording = false; }
  ~NoGradGuard() { Tape<S>::instance().recording = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Replays the tape in reverse. Gradients of op outputs are scratch that is
// re-zeroed on every call, so leaf gradients accumulate across repeated
// backward() calls while interior nodes are never double-counted.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
  auto& tape = Tape<S>::instance();
  for (auto& e : tape.entries) e.out->zero_grad_buffer();
  loss.data()->ensure_grad();
  loss.data()->grad[0] += S(1);
  for (auto it = tape.entries.rbegin(); it != tape.entries.rend(); ++it) it->backprop();
}

template <typename S>
void clear_tape() {
  Tape<S>::instance().clear();
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

struct BroadcastPlan {
  std::vector<int64_t> out_shape;
  std::vector<int64_t> a_stride;  // per out-dim element strides, 0 where broadcast
  std::vector<int64_t> b_stride;
};

inline std::vector<int64_t> contiguous_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * shape[i + 1];
  return st;
}

inline BroadcastPlan make_broadcast(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  size_t r = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out_shape.resize(r);
  p.a_stride.assign(r, 0);
  p.b_stride.assign(r, 0);
  auto sa = contiguous_strides(a);
  auto sb = contiguous_strides(b);
  for (size_t i = 0; i < r; ++i) {
    size_t oi = r - 1 - i;
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_to_string(a) + " and " +
                                  shape_to_string(b));
    p.out_shape[oi] = std::max(da, db);
    if (i < a.size() && da != 1) p.a_stride[oi] = sa[a.size() - 1 - i];
    if (i < b.size() && db != 1) p.b_stride[oi] = sb[b.size() - 1 - i];
  }
  return p;
}

// f(out_index, a_index, b_index) over the full broadcast iteration space.
template <typename F>
void for_each_bcast(const BroadcastPlan& p, F&& f) {
  int64_t n = shape_numel(p.out_shape);
  int r = static_cast<int>(p.out_shape.size());
  if (r == 0) {
    if (n == 1) f(int64_t(0), int64_t(0), int64_t(0));
    return;
  }
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t ai = 0, bi = 0;
  for (int64_t oi = 0; oi < n; ++oi) {
    f(oi, ai, bi);
    for (int d = r - 1; d >= 0; --d) {
      idx[d]++;
      ai += p.a_stride[d];
      bi += p.b_stride[d];
      if (idx[d] < p.out_shape[d]) break;
      ai -= p.a_stride[d] * p.out_shape[d];
      bi -= p.b_stride[d] * p.out_shape[d];
      idx[d] = 0;
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
inline bool want_grad(const Tensor<S>& t) {
  return grad_enabled<S>() && t.requires_grad();
}

template <typename S>
inline bool out_grad_ready(const std::shared_ptr<TensorData<S>>& out) {
  return !out->grad.empty();
}

}  // namespace detail

template <typename S, typename Fwd, typename Bwd>
Tensor<S> binary_bcast_op(const Tensor<S>& a, const Tensor<S>& b, Fwd fwd, Bwd bwd) {
  BroadcastPlan plan = make_broadcast(a.shape(), b.shape());
  Tensor<S> out(plan.out_shape);
  {
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for_each_bcast(plan, [&](int64_t oi, int64_t ai, int64_t bi) { ov[oi] = fwd(av[ai], bv[bi]); });
  }
  if (detail::want_grad(a) || detail::want_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [plan, ad, bd, od, bwd]() {
      if (!detail::out_grad_ready(od)) return;
      if (ad->requires_grad) ad->ensure_grad();
      if (bd->requires_grad) bd->ensure_grad();
      for_each_bcast(plan, [&](int64_t oi, int64_t ai, int64_t bi) {
        bwd(od->grad[oi], ad->values[ai], bd->values[bi],
            ad->requires_grad ? &ad->grad[ai] : nullptr, bd->requires_grad ? &bd->grad[bi] : nullptr);
      });
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_bcast_op(
      a, b, [](S x, S y) { return x + y; },
      [](S g, S, S, S* ga, S* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_bcast_op(
      a, b, [](S x, S y) { return x - y; },
      [](S g, S, S, S* ga, S* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_bcast_op(
      a, b, [](S x, S y) { return x * y; },
      [](S g, S x, S y, S* ga, S* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(const Tensor<S>& x, Fwd fwd, Bwd bwd_from_in_out) {
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = fwd(xv[i]);
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [xd, od, bwd_from_in_out]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (size_t i = 0; i < xd->values.size(); ++i)
        xd->grad[i] += od->grad[i] * bwd_from_in_out(xd->values[i], od->values[i]);
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  return unary_op(x, [c](S v) { return v * c; }, [c](S, S) { return c; });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return v > S(0) ? v : S(0); }, [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> tanh_op(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return S(1) / (S(1) + std::exp(-v)); }, [](S, S y) { return y * (S(1) - y); });
}

// out = x * s where s is a single-element tensor participating in the graph.
template <typename S>
Tensor<S> scale_by(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1)
    throw std::invalid_argument("scale_by: scale must have one element, got " + shape_to_string(s.shape()));
  Tensor<S> out(x.shape());
  S sv = s.values()[0];
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] * sv;
  if (detail::want_grad(x) || detail::want_grad(s)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto sd = s.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [xd, sd, od]() {
      if (!detail::out_grad_ready(od)) return;
      S sv = sd->values[0];
      if (xd->requires_grad) {
        xd->ensure_grad();
        for (size_t i = 0; i < xd->values.size(); ++i) xd->grad[i] += od->grad[i] * sv;
      }
      if (sd->requires_grad) {
        sd->ensure_grad();
        S acc = S(0);
        for (size_t i = 0; i < xd->values.size(); ++i) acc += od->grad[i] * xd->values[i];
        sd->grad[0] += acc;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out({1});
  S acc = S(0);
  for (S v : x.values()) acc += v;
  out.values()[0] = acc;
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      S g = od->grad[0];
      for (auto& gv : xd->grad) gv += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix multiplication
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename S>
void gemm_nn_acc(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    S* c = C + i * n;
    const S* a = A + i * k;
    for (int64_t l = 0; l < k; ++l) {
      S av = a[l];
      if (av == S(0)) continue;
      const S* b = B + l * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename S>
void gemm_nt_acc(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* a = A + i * k;
    S* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const S* b = B + j * k;
      S acc = S(0);
      for (int64_t l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename S>
void gemm_tn_acc(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* a = A + i * k;
    const S* b = B + i * n;
    for (int64_t l = 0; l < k; ++l) {
      S av = a[l];
      if (av == S(0)) continue;
      S* c = C + l * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

struct BatchedMatmulPlan {
  BroadcastPlan batch;      // over batch dims only
  int64_t m, k, n;
  int64_t a_block, b_block, o_block;
};

inline BatchedMatmulPlan make_matmul_plan(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                          bool trans_b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " + shape_to_string(a) + " and " +
                                shape_to_string(b));
  BatchedMatmulPlan p;
  p.m = a[a.size() - 2];
  p.k = a[a.size() - 1];
  int64_t bk = trans_b ? b[b.size() - 1] : b[b.size() - 2];
  p.n = trans_b ? b[b.size() - 2] : b[b.size() - 1];
  if (p.k != bk)
    throw std::invalid_argument("matmul: inner dimensions disagree between " + shape_to_string(a) + " and " +
                                shape_to_string(b));
  std::vector<int64_t> abatch(a.begin(), a.end() - 2), bbatch(b.begin(), b.end() - 2);
  p.batch = make_broadcast(abatch, bbatch);
  p.a_block = p.m * p.k;
  p.b_block = trans_b ? p.n * p.k : p.k * p.n;
  p.o_block = p.m * p.n;
  return p;
}

}  // namespace detail

template <typename S>
Tensor<S> matmul_impl(const Tensor<S>& a, const Tensor<S>& b, bool trans_b) {
  auto plan = detail::make_matmul_plan(a.shape(), b.shape(), trans_b);
  std::vector<int64_t> out_shape = plan.batch.out_shape;
  out_shape.push_back(plan.m);
  out_shape.push_back(plan.n);
  Tensor<S> out(out_shape);
  {
    const S* av = a.values().data();
    const S* bv = b.values().data();
    S* ov = out.values().data();
    for_each_bcast(plan.batch, [&](int64_t oi, int64_t ai, int64_t bi) {
      const S* A = av + ai * plan.a_block;
      const S* B = bv + bi * plan.b_block;
      S* C = ov + oi * plan.o_block;
      if (trans_b)
        detail::gemm_nt_acc(A, B, C, plan.m, plan.k, plan.n);
      else
        detail::gemm_nn_acc(A, B, C, plan.m, plan.k, plan.n);
    });
  }
  if (detail::want_grad(a) || detail::want_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [plan, ad, bd, od, trans_b]() {
      if (!detail::out_grad_ready(od)) return;
      if (ad->requires_grad) ad->ensure_grad();
      if (bd->requires_grad) bd->ensure_grad();
      for_each_bcast(plan.batch, [&](int64_t oi, int64_t ai, int64_t bi) {
        const S* G = od->grad.data() + oi * plan.o_block;
        const S* A = ad->values.data() + ai * plan.a_block;
        const S* B = bd->values.data() + bi * plan.b_block;
        if (ad->requires_grad) {
          S* GA = ad->grad.data() + ai * plan.a_block;
          if (trans_b)  // out = A * B^T: dA += G[m,n] * B[n,k]
            detail::gemm_nn_acc(G, B, GA, plan.m, plan.n, plan.k);
          else  // out = A * B: dA += G[m,n] * B[k,n]^T
            detail::gemm_nt_acc(G, B, GA, plan.m, plan.n, plan.k);
        }
        if (bd->requires_grad) {
          S* GB = bd->grad.data() + bi * plan.b_block;
          if (trans_b)  // dB[n,k] += G[m,n]^T * A[m,k]
            detail::gemm_tn_acc(G, A, GB, plan.m, plan.n, plan.k);
          else  // dB[k,n] += A[m,k]^T * G[m,n]
            detail::gemm_tn_acc(A, G, GB, plan.m, plan.k, plan.n);
        }
      });
    });
  }
  return out;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  return matmul_impl(a, b, false);
}

// a[..,m,k] x b[..,n,k]^T -> [..,m,n]; avoids materializing transposes for
// attention scores and weight-tied classifiers.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  return matmul_impl(a, b, true);
}

// ---------------------------------------------------------------------------
// Axis helpers
// ---------------------------------------------------------------------------

namespace detail {

struct AxisSplit {
  int64_t outer, len, inner;
};

inline AxisSplit split_axis(const std::vector<int64_t>& shape, int axis) {
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_to_string(shape));
  AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

namespace detail {

// Shared core; when zero_empty_rows is set, slices whose maximum is -inf
// (fully masked attention rows) become all-zero instead of NaN.
template <typename S>
Tensor<S> softmax_core(const Tensor<S>& x, int axis, bool zero_empty_rows, bool* saw_empty_row) {
  auto sp = split_axis(x.shape(), axis);
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  const S neg_inf = -std::numeric_limits<S>::infinity();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      int64_t base = o * sp.len * sp.inner + in;
      S mx = neg_inf;
      for (int64_t l = 0; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      if (!(mx > neg_inf)) {
        if (!zero_empty_rows)
          throw std::invalid_argument("softmax: slice with no finite entries");
        if (saw_empty_row) *saw_empty_row = true;
        for (int64_t l = 0; l < sp.len; ++l) ov[base + l * sp.inner] = S(0);
        continue;
      }
      S denom = S(0);
      for (int64_t l = 0; l < sp.len; ++l) {
        S e = std::exp(xv[base + l * sp.inner] - mx);
        ov[base + l * sp.inner] = e;
        denom += e;
      }
      for (int64_t l = 0; l < sp.len; ++l) ov[base + l * sp.inner] /= denom;
    }
  }
  if (want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [sp, xd, od]() {
      if (!out_grad_ready(od)) return;
      xd->ensure_grad();
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          int64_t base = o * sp.len * sp.inner + in;
          S dot = S(0);
          for (int64_t l = 0; l < sp.len; ++l) {
            int64_t i = base + l * sp.inner;
            dot += od->values[i] * od->grad[i];
          }
          for (int64_t l = 0; l < sp.len; ++l) {
            int64_t i = base + l * sp.inner;
            xd->grad[i] += od->values[i] * (od->grad[i] - dot);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis = -1) {
  return detail::softmax_core(x, axis, false, nullptr);
}

// Softmax used under attention masking; fully masked slices yield zeros.
template <typename S>
Tensor<S> attn_softmax(const Tensor<S>& x, bool* saw_empty_row = nullptr, int axis = -1) {
  return detail::softmax_core(x, axis, true, saw_empty_row);
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, int axis = -1) {
  auto sp = detail::split_axis(x.shape(), axis);
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      int64_t base = o * sp.len * sp.inner + in;
      S mx = xv[base];
      for (int64_t l = 1; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      S denom = S(0);
      for (int64_t l = 0; l < sp.len; ++l) denom += std::exp(xv[base + l * sp.inner] - mx);
      S lse = mx + std::log(denom);
      for (int64_t l = 0; l < sp.len; ++l) ov[base + l * sp.inner] = xv[base + l * sp.inner] - lse;
    }
  }
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [sp, xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          int64_t base = o * sp.len * sp.inner + in;
          S gsum = S(0);
          for (int64_t l = 0; l < sp.len; ++l) gsum += od->grad[base + l * sp.inner];
          for (int64_t l = 0; l < sp.len; ++l) {
            int64_t i = base + l * sp.inner;
            xd->grad[i] += od->grad[i] - std::exp(od->values[i]) * gsum;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer normalization (over the last dimension)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps) {
  if (x.rank() < 1 || x.shape().back() == 0)
    throw std::invalid_argument("layer_norm: empty last dimension in shape " + shape_to_string(x.shape()));
  int64_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw std::invalid_argument("layer_norm: gain/bias shape " + shape_to_string(gain.shape()) + "/" +
                                shape_to_string(bias.shape()) + " does not match last dimension " +
                                std::to_string(d));
  int64_t rows = x.numel() / d;
  Tensor<S> out(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  {
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    auto ov = out.values();
    for (int64_t r = 0; r < rows; ++r) {
      const S* row = xv.data() + r * d;
      S mean = S(0);
      for (int64_t j = 0; j < d; ++j) mean += row[j];
      mean /= static_cast<S>(d);
      S var = S(0);
      for (int64_t j = 0; j < d; ++j) {
        S c = row[j] - mean;
        var += c * c;
      }
      var /= static_cast<S>(d);
      S inv = S(1) / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(r)] = inv;
      for (int64_t j = 0; j < d; ++j) {
        S nh = (row[j] - mean) * inv;
        (*xhat)[static_cast<size_t>(r * d + j)] = nh;
        ov[r * d + j] = gv[j] * nh + bv[j];
      }
    }
  }
  if (detail::want_grad(x) || detail::want_grad(gain) || detail::want_grad(bias)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto gd = gain.data();
    auto bd = bias.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [rows, d, xhat, inv_std, xd, gd, bd, od]() {
      if (!detail::out_grad_ready(od)) return;
      if (xd->requires_grad) xd->ensure_grad();
      if (gd->requires_grad) gd->ensure_grad();
      if (bd->requires_grad) bd->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const S* go = od->grad.data() + r * d;
        const S* nh = xhat->data() + r * d;
        if (gd->requires_grad)
          for (int64_t j = 0; j < d; ++j) gd->grad[j] += go[j] * nh[j];
        if (bd->requires_grad)
          for (int64_t j = 0; j < d; ++j) bd->grad[j] += go[j];
        if (xd->requires_grad) {
          S inv = (*inv_std)[static_cast<size_t>(r)];
          S mean_gy = S(0), mean_gy_nh = S(0);
          for (int64_t j = 0; j < d; ++j) {
            S gy = go[j] * gd->values[j];
            mean_gy += gy;
            mean_gy_nh += gy * nh[j];
          }
          mean_gy /= static_cast<S>(d);
          mean_gy_nh /= static_cast<S>(d);
          for (int64_t j = 0; j < d; ++j) {
            S gy = go[j] * gd->values[j];
            xd->grad[r * d + j] += inv * (gy - mean_gy - nh[j] * mean_gy_nh);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout, masking, embedding
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, RngCounter* rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  if (!rng) throw std::invalid_argument("dropout: rng stream required in training mode");
  uint64_t block = rng->next_block();
  uint64_t seed = rng->seed;
  auto keep = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x.numel()));
  S inv_keep = S(1.0 / (1.0 - p));
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t i = 0; i < x.numel(); ++i) {
    bool k = element_u01(seed, block, static_cast<uint64_t>(i)) >= p;
    (*keep)[static_cast<size_t>(i)] = k;
    ov[i] = k ? xv[i] * inv_keep : S(0);
  }
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [keep, inv_keep, xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (size_t i = 0; i < xd->values.size(); ++i)
        if ((*keep)[i]) xd->grad[i] += od->grad[i] * inv_keep;
    });
  }
  return out;
}

// mask broadcastable over x; entries where mask != 0 are replaced by `value`
// and receive zero gradient.
template <typename S>
Tensor<S> mask_fill(const Tensor<S>& x, const Tensor<uint8_t>& mask, S value) {
  BroadcastPlan plan = make_broadcast(x.shape(), mask.shape());
  if (plan.out_shape != x.shape())
    throw std::invalid_argument("mask_fill: mask " + shape_to_string(mask.shape()) +
                                " does not broadcast onto " + shape_to_string(x.shape()));
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto mv = mask.values();
  auto ov = out.values();
  for_each_bcast(plan, [&](int64_t oi, int64_t ai, int64_t bi) { ov[oi] = mv[bi] ? value : xv[ai]; });
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto md = mask.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [plan, xd, md, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for_each_bcast(plan, [&](int64_t oi, int64_t ai, int64_t bi) {
        if (!md->values[bi]) xd->grad[ai] += od->grad[oi];
      });
    });
  }
  return out;
}

// table[V,d] gathered by ids -> [rows, cols, d]; gradient scatter-adds.
template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const IdMatrix& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " + shape_to_string(table.shape()));
  int64_t V = table.dim(0), d = table.dim(1);
  for (int64_t r = 0; r < ids.rows; ++r)
    for (int64_t c = 0; c < ids.cols; ++c) {
      int32_t id = ids.at(r, c);
      if (id < 0 || id >= V)
        throw std::out_of_range("embedding_lookup: id " + std::to_string(id) + " at row " + std::to_string(r) +
                                " col " + std::to_string(c) + " outside vocabulary of " + std::to_string(V));
    }
  Tensor<S> out({ids.rows, ids.cols, d});
  auto tv = table.values();
  auto ov = out.values();
  for (int64_t r = 0; r < ids.rows; ++r)
    for (int64_t c = 0; c < ids.cols; ++c) {
      const S* src = tv.data() + static_cast<int64_t>(ids.at(r, c)) * d;
      S* dst = ov.data() + (r * ids.cols + c) * d;
      std::copy(src, src + d, dst);
    }
  if (detail::want_grad(table)) {
    out.set_requires_grad(true);
    auto td = table.data();
    auto od = out.data();
    IdMatrix ids_copy = ids;
    Tape<S>::instance().record(od, [td, od, ids_copy, d]() {
      if (!detail::out_grad_ready(od)) return;
      td->ensure_grad();
      for (int64_t r = 0; r < ids_copy.rows; ++r)
        for (int64_t c = 0; c < ids_copy.cols; ++c) {
          S* dst = td->grad.data() + static_cast<int64_t>(ids_copy.at(r, c)) * d;
          const S* g = od->grad.data() + (r * ids_copy.cols + c) * d;
          for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int64_t> new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw std::invalid_argument("reshape: cannot reshape " + shape_to_string(x.shape()) + " to " +
                                shape_to_string(new_shape));
  Tensor<S> out = Tensor<S>::from(std::move(new_shape), std::vector<S>(x.values().begin(), x.values().end()));
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x, int d1, int d2) {
  int r = x.rank();
  if (d1 < 0) d1 += r;
  if (d2 < 0) d2 += r;
  if (d1 < 0 || d1 >= r || d2 < 0 || d2 >= r)
    throw std::invalid_argument("transpose: axes out of range for shape " + shape_to_string(x.shape()));
  std::vector<int64_t> out_shape = x.shape();
  std::swap(out_shape[static_cast<size_t>(d1)], out_shape[static_cast<size_t>(d2)]);
  Tensor<S> out(out_shape);
  auto in_strides = contiguous_strides(x.shape());
  auto perm_strides = in_strides;
  std::swap(perm_strides[static_cast<size_t>(d1)], perm_strides[static_cast<size_t>(d2)]);
  auto map_index = [r, out_shape, perm_strides](int64_t oi) {
    int64_t xi = 0;
    for (int i = r - 1; i >= 0; --i) {
      int64_t q = oi % out_shape[static_cast<size_t>(i)];
      oi /= out_shape[static_cast<size_t>(i)];
      xi += q * perm_strides[static_cast<size_t>(i)];
    }
    return xi;
  };
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t oi = 0; oi < out.numel(); ++oi) ov[oi] = xv[map_index(oi)];
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [map_index, xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (int64_t oi = 0; oi < static_cast<int64_t>(od->grad.size()); ++oi)
        xd->grad[map_index(oi)] += od->grad[oi];
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, int64_t start, int64_t len) {
  auto sp = detail::split_axis(x.shape(), axis);
  if (axis < 0) axis += x.rank();
  if (start < 0 || len <= 0 || start + len > sp.len)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") invalid for axis length " + std::to_string(sp.len));
  std::vector<int64_t> out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor<S> out(out_shape);
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t l = 0; l < len; ++l) {
      const S* src = xv.data() + (o * sp.len + start + l) * sp.inner;
      S* dst = ov.data() + (o * len + l) * sp.inner;
      std::copy(src, src + sp.inner, dst);
    }
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [sp, start, len, xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t l = 0; l < len; ++l) {
          S* dst = xd->grad.data() + (o * sp.len + start + l) * sp.inner;
          const S* g = od->grad.data() + (o * len + l) * sp.inner;
          for (int64_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  auto ref_shape = parts[0].shape();
  int r = static_cast<int>(ref_shape.size());
  if (axis < 0) axis += r;
  int64_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != r)
      throw std::invalid_argument("concat: rank mismatch between " + shape_to_string(ref_shape) + " and " +
                                  shape_to_string(t.shape()));
    for (int i = 0; i < r; ++i)
      if (i != axis && t.shape()[static_cast<size_t>(i)] != ref_shape[static_cast<size_t>(i)])
        throw std::invalid_argument("concat: shape mismatch between " + shape_to_string(ref_shape) + " and " +
                                    shape_to_string(t.shape()));
    total += t.shape()[static_cast<size_t>(axis)];
  }
  std::vector<int64_t> out_shape = ref_shape;
  out_shape[static_cast<size_t>(axis)] = total;
  auto sp_out = detail::split_axis(out_shape, axis);
  Tensor<S> out(out_shape);
  auto ov = out.values();
  int64_t off = 0;
  std::vector<int64_t> offsets;
  for (const auto& t : parts) {
    int64_t len = t.shape()[static_cast<size_t>(axis)];
    offsets.push_back(off);
    auto tv = t.values();
    for (int64_t o = 0; o < sp_out.outer; ++o) {
      const S* src = tv.data() + o * len * sp_out.inner;
      S* dst = ov.data() + (o * sp_out.len + off) * sp_out.inner;
      std::copy(src, src + len * sp_out.inner, dst);
    }
    off += len;
  }
  bool any = false;
  for (const auto& t : parts) any = any || detail::want_grad(t);
  if (any) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<S>>> pd;
    std::vector<int64_t> lens;
    for (const auto& t : parts) {
      pd.push_back(t.data());
      lens.push_back(t.shape()[static_cast<size_t>(axis)]);
    }
    auto od = out.data();
    Tape<S>::instance().record(od, [sp_out, pd, lens, offsets, od]() {
      if (!detail::out_grad_ready(od)) return;
      for (size_t pi = 0; pi < pd.size(); ++pi) {
        if (!pd[pi]->requires_grad) continue;
        pd[pi]->ensure_grad();
        for (int64_t o = 0; o < sp_out.outer; ++o) {
          const S* g = od->grad.data() + (o * sp_out.len + offsets[pi]) * sp_out.inner;
          S* dst = pd[pi]->grad.data() + o * lens[pi] * sp_out.inner;
          for (int64_t i = 0; i < lens[pi] * sp_out.inner; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return out;
}

// Running mean along `axis`: out[.., t, ..] = mean of x[.., 0..t, ..].
template <typename S>
Tensor<S> cumulative_mean(const Tensor<S>& x, int axis) {
  auto sp = detail::split_axis(x.shape(), axis);
  Tensor<S> out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t in = 0; in < sp.inner; ++in) {
      int64_t base = o * sp.len * sp.inner + in;
      S acc = S(0);
      for (int64_t l = 0; l < sp.len; ++l) {
        acc += xv[base + l * sp.inner];
        ov[base + l * sp.inner] = acc / static_cast<S>(l + 1);
      }
    }
  if (detail::want_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.data();
    auto od = out.data();
    Tape<S>::instance().record(od, [sp, xd, od]() {
      if (!detail::out_grad_ready(od)) return;
      xd->ensure_grad();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t in = 0; in < sp.inner; ++in) {
          int64_t base = o * sp.len * sp.inner + in;
          S acc = S(0);
          for (int64_t l = sp.len - 1; l >= 0; --l) {
            acc += od->grad[base + l * sp.inner] / static_cast<S>(l + 1);
            xd->grad[base + l * sp.inner] += acc;
          }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-differentiable utilities
// ---------------------------------------------------------------------------

// First-maximum argmax along the last axis.
template <typename S>
std::vector<int64_t> argmax_last(const Tensor<S>& x) {
  int64_t d = x.shape().back();
  int64_t rows = x.numel() / d;
  std::vector<int64_t> out(static_cast<size_t>(rows));
  auto xv = x.values();
  for (int64_t r = 0; r < rows; ++r) {
    const S* row = xv.data() + r * d;
    int64_t best = 0;
    for (int64_t j = 1; j < d; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

template <typename S>
Tensor<S> uniform_init(std::vector<int64_t> shape, S limit, RngStream& rng) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<S>((rng.next_u01() * 2.0 - 1.0) * static_cast<double>(limit));
  return t;
}

template <typename S>
bool all_finite(const Tensor<S>& x) {
  for (S v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace nmtk
