#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nmtk/config.hpp"
#include "nmtk/rng.hpp"
#include "nmtk/tensor.hpp"

namespace nmtk {

// Per-forward runtime context: training switches dropout/noise on, and the
// counter hands every stochastic op its own reproducible block id.
struct RunCtx {
  bool training = false;
  RngCounter* rng = nullptr;
};

template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

template <typename S>
void add_param(ParamList<S>& out, const std::string& name, const Tensor<S>& t) {
  out.push_back(NamedParam<S>{name, t});
}

template <typename S>
Tensor<S> xavier_uniform(std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out, RngStream& rng) {
  S limit = static_cast<S>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  Tensor<S> t = uniform_init<S>(std::move(shape), limit, rng);
  t.set_requires_grad(true);
  return t;
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, weight stored [out, in]
// ---------------------------------------------------------------------------

template <typename S>
struct Linear {
  Tensor<S> weight;
  Tensor<S> bias;
  bool has_bias = true;

  Linear() = default;
  Linear(int64_t in, int64_t out, RngStream& rng, bool with_bias = true) : has_bias(with_bias) {
    weight = xavier_uniform<S>({out, in}, in, out, rng);
    if (has_bias) {
      bias = Tensor<S>({out});
      bias.set_requires_grad(true);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = matmul_nt(x, weight);
    return has_bias ? add(y, bias) : y;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    add_param(out, prefix + ".weight", weight);
    if (has_bias) add_param(out, prefix + ".bias", bias);
  }
};

// ---------------------------------------------------------------------------
// Layer normalization over the last dimension
// ---------------------------------------------------------------------------

template <typename S>
struct LayerNormModule {
  Tensor<S> gain;
  Tensor<S> bias;
  S eps = static_cast<S>(1e-6);

  LayerNormModule() = default;
  explicit LayerNormModule(int64_t dim) {
    gain = Tensor<S>({dim}, S(1));
    gain.set_requires_grad(true);
    bias = Tensor<S>({dim});
    bias.set_requires_grad(true);
  }

  Tensor<S> forward(const Tensor<S>& x) const { return layer_norm(x, gain, bias, eps); }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    add_param(out, prefix + ".gain", gain);
    add_param(out, prefix + ".bias", bias);
  }
};

// ---------------------------------------------------------------------------
// Embedding table [V, d]
// ---------------------------------------------------------------------------

template <typename S>
struct Embedding {
  Tensor<S> table;

  Embedding() = default;
  Embedding(int64_t vocab, int64_t dim, RngStream& rng) { table = xavier_uniform<S>({vocab, dim}, vocab, dim, rng); }

  Tensor<S> forward(const IdMatrix& ids) const { return embedding_lookup(table, ids); }

  void collect(const std::string& prefix, ParamList<S>& out) const { add_param(out, prefix + ".weight", table); }
};

// ---------------------------------------------------------------------------
// Sinusoidal positional embedding, cached and extended on demand
// ---------------------------------------------------------------------------

template <typename S>
class PositionalEmb {
 public:
  PositionalEmb() = default;
  PositionalEmb(int64_t dim, int64_t cache_len) : dim_(dim) {
    if (dim % 2 != 0) throw ConfigError("positional embedding needs an even dimension, got " + std::to_string(dim));
    extend(cache_len);
  }

  // Rows [0, length); never participates in gradients.
  Tensor<S> get(int64_t length) {
    if (length > cached_rows_) extend(length);
    Tensor<S> out({length, dim_});
    std::copy(cache_.begin(), cache_.begin() + static_cast<size_t>(length * dim_), out.values().begin());
    return out;
  }

  // Pre-extends the cache so later get()/row() calls are read-only; lets a
  // server share one model across threads.
  void ensure(int64_t rows) {
    if (rows > cached_rows_) extend(rows);
  }

  // A single row as [1, dim], for incremental decoding.
  Tensor<S> row(int64_t pos) {
    if (pos + 1 > cached_rows_) extend(pos + 1);
    Tensor<S> out({1, dim_});
    std::copy(cache_.begin() + static_cast<size_t>(pos * dim_),
              cache_.begin() + static_cast<size_t>((pos + 1) * dim_), out.values().begin());
    return out;
  }

 private:
  void extend(int64_t rows) {
    cache_.resize(static_cast<size_t>(rows * dim_));
    for (int64_t p = cached_rows_; p < rows; ++p)
      for (int64_t i = 0; i < dim_ / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim_));
        double angle = static_cast<double>(p) * freq;
        cache_[static_cast<size_t>(p * dim_ + 2 * i)] = static_cast<S>(std::sin(angle));
        cache_[static_cast<size_t>(p * dim_ + 2 * i + 1)] = static_cast<S>(std::cos(angle));
      }
    cached_rows_ = rows;
  }

  int64_t dim_ = 0;
  int64_t cached_rows_ = 0;
  std::vector<S> cache_;
};

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

namespace detail {

// [B,T,nh*hd] -> [B,nh,T,hd]
template <typename S>
Tensor<S> split_heads(const Tensor<S>& x, int64_t nhead) {
  int64_t b = x.dim(0), t = x.dim(1), ah = x.dim(2);
  return transpose(reshape(x, {b, t, nhead, ah / nhead}), 1, 2);
}

// [B,nh,T,hd] -> [B,T,nh*hd]
template <typename S>
Tensor<S> merge_heads(const Tensor<S>& x) {
  int64_t b = x.dim(0), nh = x.dim(1), t = x.dim(2), hd = x.dim(3);
  return reshape(transpose(x, 1, 2), {b, t, nh * hd});
}

template <typename S>
Tensor<S> attention_core(const Tensor<S>& qh, const Tensor<S>& kh, const Tensor<S>& vh,
                         const Tensor<uint8_t>* mask, double attn_drop, const RunCtx& ctx) {
  int64_t hd = qh.shape().back();
  Tensor<S> scores = scale(matmul_nt(qh, kh), static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd))));
  if (mask) scores = mask_fill(scores, *mask, -std::numeric_limits<S>::infinity());
  Tensor<S> w = attn_softmax(scores);
  w = dropout(w, attn_drop, ctx.training, ctx.rng);
  return matmul(w, vh);
}

}  // namespace detail

// Self attention with a fused Q,K,V projection.
template <typename S>
struct SelfAttn {
  int64_t nhead = 0;
  double attn_drop = 0.0;
  Linear<S> wqkv;
  Linear<S> wo;

  SelfAttn() = default;
  SelfAttn(const ModelConfig& cfg, RngStream& rng)
      : nhead(cfg.nhead),
        attn_drop(cfg.attn_drop),
        wqkv(cfg.isize, 3 * cfg.attn_dim(), rng),
        wo(cfg.attn_dim(), cfg.isize, rng) {}

  Tensor<S> forward(const Tensor<S>& x, const Tensor<uint8_t>* mask, const RunCtx& ctx) const {
    int64_t ah = wo.weight.dim(1);
    Tensor<S> qkv = wqkv.forward(x);
    Tensor<S> qh = detail::split_heads(slice(qkv, -1, 0, ah), nhead);
    Tensor<S> kh = detail::split_heads(slice(qkv, -1, ah, ah), nhead);
    Tensor<S> vh = detail::split_heads(slice(qkv, -1, 2 * ah, ah), nhead);
    Tensor<S> ctx_out = detail::attention_core(qh, kh, vh, mask, attn_drop, ctx);
    return wo.forward(detail::merge_heads(ctx_out));
  }

  // One query step against cached keys/values; appends this step to the cache.
  Tensor<S> step(const Tensor<S>& x_t, Tensor<S>& k_cache, Tensor<S>& v_cache, const RunCtx& ctx) const {
    int64_t ah = wo.weight.dim(1);
    Tensor<S> qkv = wqkv.forward(x_t);  // [B,1,3ah]
    Tensor<S> qh = detail::split_heads(slice(qkv, -1, 0, ah), nhead);
    Tensor<S> kh = detail::split_heads(slice(qkv, -1, ah, ah), nhead);
    Tensor<S> vh = detail::split_heads(slice(qkv, -1, 2 * ah, ah), nhead);
    k_cache = k_cache.defined() ? concat<S>({k_cache, kh}, 2) : kh;
    v_cache = v_cache.defined() ? concat<S>({v_cache, vh}, 2) : vh;
    Tensor<S> ctx_out = detail::attention_core(qh, k_cache, v_cache, nullptr, attn_drop, ctx);
    return wo.forward(detail::merge_heads(ctx_out));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    wqkv.collect(prefix + ".wqkv", out);
    wo.collect(prefix + ".wo", out);
  }
};

// Cross attention with a fused K,V projection over the encoder output.
template <typename S>
struct CrossAttn {
  int64_t nhead = 0;
  double attn_drop = 0.0;
  Linear<S> wq;
  Linear<S> wkv;
  Linear<S> wo;

  CrossAttn() = default;
  CrossAttn(const ModelConfig& cfg, RngStream& rng)
      : nhead(cfg.nhead),
        attn_drop(cfg.attn_drop),
        wq(cfg.isize, cfg.attn_dim(), rng),
        wkv(cfg.isize, 2 * cfg.attn_dim(), rng),
        wo(cfg.attn_dim(), cfg.isize, rng) {}

  std::pair<Tensor<S>, Tensor<S>> project_kv(const Tensor<S>& enc) const {
    int64_t ah = wo.weight.dim(1);
    Tensor<S> kv = wkv.forward(enc);
    return {detail::split_heads(slice(kv, -1, 0, ah), nhead), detail::split_heads(slice(kv, -1, ah, ah), nhead)};
  }

  Tensor<S> forward_projected(const Tensor<S>& q, const Tensor<S>& kh, const Tensor<S>& vh,
                              const Tensor<uint8_t>* mask, const RunCtx& ctx) const {
    Tensor<S> qh = detail::split_heads(wq.forward(q), nhead);
    Tensor<S> ctx_out = detail::attention_core(qh, kh, vh, mask, attn_drop, ctx);
    return wo.forward(detail::merge_heads(ctx_out));
  }

  Tensor<S> forward(const Tensor<S>& q, const Tensor<S>& enc, const Tensor<uint8_t>* mask,
                    const RunCtx& ctx) const {
    auto [kh, vh] = project_kv(enc);
    return forward_projected(q, kh, vh, mask, ctx);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    wq.collect(prefix + ".wq", out);
    wkv.collect(prefix + ".wkv", out);
    wo.collect(prefix + ".wo", out);
  }
};

// ---------------------------------------------------------------------------
// Position-wise feed forward: x + dropout(W2 relu(W1 LN(x)))
// ---------------------------------------------------------------------------

template <typename S>
struct PositionwiseFF {
  LayerNormModule<S> ln;
  Linear<S> w1;
  Linear<S> w2;
  double drop = 0.0;

  PositionwiseFF() = default;
  PositionwiseFF(int64_t isize, int64_t hsize, double drop_p, RngStream& rng)
      : ln(isize), w1(isize, hsize, rng), w2(hsize, isize, rng), drop(drop_p) {}

  Tensor<S> forward(const Tensor<S>& x, const RunCtx& ctx) const {
    Tensor<S> h = w2.forward(relu(w1.forward(ln.forward(x))));
    return add(x, dropout(h, drop, ctx.training, ctx.rng));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    ln.collect(prefix + ".ln", out);
    w1.collect(prefix + ".w1", out);
    w2.collect(prefix + ".w2", out);
  }
};

// ---------------------------------------------------------------------------
// Average attention: cumulative mean, a two-layer FFN and input/forget gates
// ---------------------------------------------------------------------------

template <typename S>
struct AverageAttn {
  Linear<S> w1;
  Linear<S> w2;
  Linear<S> gates;  // [y; h] -> 2*isize, split into input/forget gates
  int64_t isize = 0;

  AverageAttn() = default;
  AverageAttn(int64_t isize_, int64_t hsize, RngStream& rng)
      : w1(isize_, hsize, rng), w2(hsize, isize_, rng), gates(2 * isize_, 2 * isize_, rng), isize(isize_) {}

  Tensor<S> gate_combine(const Tensor<S>& y, const Tensor<S>& avg) const {
    Tensor<S> h = w2.forward(relu(w1.forward(avg)));
    Tensor<S> g = gates.forward(concat<S>({y, h}, -1));
    Tensor<S> gi = sigmoid(slice(g, -1, 0, isize));
    Tensor<S> gf = sigmoid(slice(g, -1, isize, isize));
    return add(mul(gi, y), mul(gf, h));
  }

  // Training path over the whole sequence; causal by construction.
  Tensor<S> forward(const Tensor<S>& y, const RunCtx&) const {
    return gate_combine(y, cumulative_mean(y, 1));
  }

  // Incremental: state carries (running sum [B,1,d], count t).
  Tensor<S> step(const Tensor<S>& y_t, Tensor<S>& sum_state, int64_t& count) const {
    if (count < 0) throw std::invalid_argument("average attention: negative step counter");
    sum_state = sum_state.defined() ? add(sum_state, y_t) : y_t;
    count++;
    Tensor<S> avg = scale(sum_state, static_cast<S>(1.0 / static_cast<double>(count)));
    return gate_combine(y_t, avg);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    w1.collect(prefix + ".w1", out);
    w2.collect(prefix + ".w2", out);
    gates.collect(prefix + ".gates", out);
  }
};

// ---------------------------------------------------------------------------
// Residue combiner: LN(FFN(concat(inputs)) + sum(inputs))
// ---------------------------------------------------------------------------

template <typename S>
struct ResidueCombiner {
  Linear<S> w1;
  Linear<S> w2;
  LayerNormModule<S> ln;
  size_t arity = 0;

  ResidueCombiner() = default;
  ResidueCombiner(int64_t isize, size_t arity_, int64_t hsize, RngStream& rng)
      : w1(static_cast<int64_t>(arity_) * isize, hsize, rng), w2(hsize, isize, rng), ln(isize), arity(arity_) {}

  Tensor<S> forward(const std::vector<Tensor<S>>& inputs) const {
    if (inputs.size() != arity)
      throw std::invalid_argument("residue combiner: got " + std::to_string(inputs.size()) +
                                  " inputs, built for " + std::to_string(arity));
    for (size_t i = 1; i < inputs.size(); ++i)
      if (inputs[i].shape() != inputs[0].shape())
        throw std::invalid_argument("residue combiner: input " + std::to_string(i) + " shape " +
                                    shape_to_string(inputs[i].shape()) + " differs from " +
                                    shape_to_string(inputs[0].shape()));
    Tensor<S> h = w2.forward(relu(w1.forward(concat(inputs, -1))));
    Tensor<S> total = inputs[0];
    for (size_t i = 1; i < inputs.size(); ++i) total = add(total, inputs[i]);
    return ln.forward(add(h, total));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    w1.collect(prefix + ".w1", out);
    w2.collect(prefix + ".w2", out);
    ln.collect(prefix + ".ln", out);
  }
};

// ---------------------------------------------------------------------------
// Dynamic scaled gaussian noise, training only
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> apply_noise(const Tensor<S>& x, double scale, const RunCtx& ctx) {
  if (!ctx.training || scale <= 0.0) return x;
  if (!ctx.rng) throw std::invalid_argument("noise: rng stream required in training mode");
  double sq = 0.0;
  for (S v : x.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  double rms = std::sqrt(sq / static_cast<double>(x.numel()));
  double std_dev = scale * rms;
  uint64_t block = ctx.rng->next_block();
  Tensor<S> noise(x.shape());
  auto nv = noise.values();
  for (int64_t i = 0; i < x.numel(); ++i) {
    double u1 = element_u01(ctx.rng->seed, block, static_cast<uint64_t>(2 * i));
    double u2 = element_u01(ctx.rng->seed, block, static_cast<uint64_t>(2 * i + 1));
    if (u1 < 1e-300) u1 = 1e-300;
    nv[i] = static_cast<S>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2) * std_dev);
  }
  return add(x, noise);
}

// ---------------------------------------------------------------------------
// LSTM cell for the recurrent decoder variant
// ---------------------------------------------------------------------------

template <typename S>
struct LstmCell {
  Linear<S> wx;  // input -> 4*hsize
  Linear<S> wh;  // hidden -> 4*hsize, no separate bias
  int64_t hsize = 0;

  LstmCell() = default;
  LstmCell(int64_t in, int64_t hsize_, RngStream& rng)
      : wx(in, 4 * hsize_, rng), wh(hsize_, 4 * hsize_, rng, false), hsize(hsize_) {}

  // x [B,1,in], h/c [B,1,hsize] -> new (h, c)
  std::pair<Tensor<S>, Tensor<S>> step(const Tensor<S>& x, const Tensor<S>& h, const Tensor<S>& c) const {
    Tensor<S> g = add(wx.forward(x), wh.forward(h));
    Tensor<S> i = sigmoid(slice(g, -1, 0, hsize));
    Tensor<S> f = sigmoid(slice(g, -1, hsize, hsize));
    Tensor<S> z = tanh_op(slice(g, -1, 2 * hsize, hsize));
    Tensor<S> o = sigmoid(slice(g, -1, 3 * hsize, hsize));
    Tensor<S> c_new = add(mul(f, c), mul(i, z));
    Tensor<S> h_new = mul(o, tanh_op(c_new));
    return {h_new, c_new};
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    wx.collect(prefix + ".wx", out);
    wh.collect(prefix + ".wh", out);
  }
};

}  // namespace nmtk
