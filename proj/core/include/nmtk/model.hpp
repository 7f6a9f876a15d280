#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nmtk/modules.hpp"
#include "nmtk/vocab.hpp"

namespace nmtk {

template <typename S>
struct EncoderOutput {
  Tensor<S> final;                  // [B,S,d]
  std::vector<Tensor<S>> per_layer; // transparent variant: embedding output + each layer
  Tensor<uint8_t> src_pad_mask;     // [B,1,1,S], 1 where pad
};

// ---------------------------------------------------------------------------
// Inference-only row utilities for batched/beamed decoding
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> select_rows(const Tensor<S>& x, const std::vector<int64_t>& rows) {
  int64_t block = x.numel() / x.dim(0);
  std::vector<int64_t> shape = x.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  Tensor<S> out(shape);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.dim(0))
      throw std::out_of_range("select_rows: row " + std::to_string(rows[r]) + " outside batch of " +
                              std::to_string(x.dim(0)));
    std::copy(x.values().begin() + rows[r] * block, x.values().begin() + (rows[r] + 1) * block,
              out.values().begin() + static_cast<int64_t>(r) * block);
  }
  return out;
}

template <typename S>
Tensor<S> repeat_rows(const Tensor<S>& x, int64_t times) {
  std::vector<int64_t> rows;
  rows.reserve(static_cast<size_t>(x.dim(0) * times));
  for (int64_t b = 0; b < x.dim(0); ++b)
    for (int64_t t = 0; t < times; ++t) rows.push_back(b);
  return select_rows(x, rows);
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

inline Tensor<uint8_t> src_pad_mask_of(const IdMatrix& ids) {
  Tensor<uint8_t> m({ids.rows, 1, 1, ids.cols});
  for (int64_t r = 0; r < ids.rows; ++r)
    for (int64_t c = 0; c < ids.cols; ++c)
      m.values()[r * ids.cols + c] = ids.at(r, c) == Vocab::pad_id ? 1 : 0;
  return m;
}

// Causal mask joined with key-side padding: hides position k from query q
// when k > q or token k is pad.
inline Tensor<uint8_t> causal_pad_mask_of(const IdMatrix& ids) {
  int64_t b = ids.rows, t = ids.cols;
  Tensor<uint8_t> m({b, 1, t, t});
  for (int64_t r = 0; r < b; ++r)
    for (int64_t q = 0; q < t; ++q)
      for (int64_t k = 0; k < t; ++k)
        m.values()[(r * t + q) * t + k] = (k > q || ids.at(r, k) == Vocab::pad_id) ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

template <typename S>
struct EncLayer {
  LayerNormModule<S> ln;
  SelfAttn<S> attn;
  PositionwiseFF<S> ff;

  EncLayer() = default;
  EncLayer(const ModelConfig& cfg, RngStream& rng)
      : ln(cfg.isize), attn(cfg, rng), ff(cfg.isize, cfg.ff_hsize, cfg.drop, rng) {}

  Tensor<S> forward(const Tensor<S>& x, const Tensor<uint8_t>* mask, const RunCtx& ctx, double drop) const {
    Tensor<S> h = add(x, dropout(attn.forward(ln.forward(x), mask, ctx), drop, ctx.training, ctx.rng));
    return ff.forward(h, ctx);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    ln.collect(prefix + ".ln", out);
    attn.collect(prefix + ".attn", out);
    ff.collect(prefix + ".ff", out);
  }
};

template <typename S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& cfg, Embedding<S> emb, RngStream& rng)
      : cfg_(cfg), emb_(std::move(emb)), pe_(cfg.isize, cfg.cache_len) {
    for (int64_t i = 0; i < cfg.nlayer; ++i) layers_.emplace_back(cfg, rng);
    if (cfg.variant == Variant::hierarchical)
      for (int64_t g = 0; g < cfg.nlayer / 2; ++g)
        combiners_.emplace_back(cfg.isize, g == 0 ? 2 : 3, cfg.ff_hsize, rng);
    if (cfg.norm_output) final_ln_ = LayerNormModule<S>(cfg.isize);
  }

  EncoderOutput<S> forward(const IdMatrix& ids, const RunCtx& ctx) {
    if (ids.cols == 0 || ids.rows == 0)
      throw std::invalid_argument("encoder: empty input of " + std::to_string(ids.rows) + "x" +
                                  std::to_string(ids.cols));
    EncoderOutput<S> out;
    out.src_pad_mask = src_pad_mask_of(ids);
    Tensor<S> x = scale(emb_.forward(ids), static_cast<S>(std::sqrt(static_cast<double>(cfg_.isize))));
    x = add(x, pe_.get(ids.cols));
    x = dropout(x, cfg_.drop, ctx.training, ctx.rng);
    x = apply_noise(x, cfg_.noise_scale, ctx);

    bool transparent = cfg_.variant == Variant::transparent;
    if (transparent) out.per_layer.push_back(x);
    std::vector<Tensor<S>> kept;  // hierarchical: outputs of the current group
    Tensor<S> summary;
    size_t combiner_idx = 0;
    for (const auto& layer : layers_) {
      x = layer.forward(x, &out.src_pad_mask, ctx, cfg_.drop);
      if (transparent) out.per_layer.push_back(x);
      if (cfg_.variant == Variant::hierarchical) {
        kept.push_back(x);
        if (kept.size() == 2) {
          std::vector<Tensor<S>> inputs;
          if (summary.defined()) inputs.push_back(summary);
          inputs.push_back(kept[0]);
          inputs.push_back(kept[1]);
          summary = combiners_[combiner_idx++].forward(inputs);
          kept.clear();
        }
      }
    }
    if (cfg_.variant == Variant::hierarchical)
      out.final = summary;
    else
      out.final = cfg_.norm_output ? final_ln_.forward(x) : x;
    return out;
  }

  const Embedding<S>& emb() const { return emb_; }
  Embedding<S>& emb() { return emb_; }

  void warm_positions(int64_t len) { pe_.ensure(len); }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    emb_.collect(prefix + ".emb", out);
    for (size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + ".layers." + std::to_string(i), out);
    for (size_t i = 0; i < combiners_.size(); ++i)
      combiners_[i].collect(prefix + ".combiners." + std::to_string(i), out);
    if (cfg_.norm_output) final_ln_.collect(prefix + ".final_ln", out);
  }

 private:
  ModelConfig cfg_;
  Embedding<S> emb_;
  PositionalEmb<S> pe_;
  std::vector<EncLayer<S>> layers_;
  std::vector<ResidueCombiner<S>> combiners_;
  LayerNormModule<S> final_ln_;
};

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

// Incremental decoding state. Self-attention caches grow with the step count;
// the average-attention replacement keeps only a running sum and counter.
template <typename S>
struct DecodeState {
  int64_t step = 0;
  std::vector<Tensor<S>> self_k, self_v;    // per layer, [B,nh,t,hd]
  std::vector<Tensor<S>> avg_sum;           // per layer, [B,1,d]
  std::vector<Tensor<S>> rnn_h, rnn_c;      // per cell, [B,1,d]
  std::vector<Tensor<S>> cross_k, cross_v;  // per layer, [B,nh,S,hd], fixed after init
  Tensor<uint8_t> src_mask;

  // Payload bytes held by the state (ids and counters excluded).
  size_t byte_size() const {
    size_t n = 0;
    for (const auto* group : {&self_k, &self_v, &avg_sum, &rnn_h, &rnn_c, &cross_k, &cross_v})
      for (const auto& t : *group)
        if (t.defined()) n += static_cast<size_t>(t.numel()) * sizeof(S);
    return n;
  }

  DecodeState clone() const {
    DecodeState c = *this;
    for (auto* group : {&c.self_k, &c.self_v, &c.avg_sum, &c.rnn_h, &c.rnn_c})
      for (auto& t : *group)
        if (t.defined()) t = t.clone();
    return c;  // cross caches and mask are read-only after init, aliasing is safe
  }

  // Keeps only the given batch rows, in order; used for beam reordering.
  void reorder(const std::vector<int64_t>& rows) {
    for (auto* group : {&self_k, &self_v, &avg_sum, &rnn_h, &rnn_c, &cross_k, &cross_v})
      for (auto& t : *group)
        if (t.defined()) t = select_rows(t, rows);
    if (src_mask.defined()) src_mask = select_rows(src_mask, rows);
  }
};

template <typename S>
struct DecLayer {
  LayerNormModule<S> ln_self;
  SelfAttn<S> self_attn;
  AverageAttn<S> avg_attn;
  LayerNormModule<S> ln_cross;
  CrossAttn<S> cross_attn;
  PositionwiseFF<S> ff;
  Tensor<S> trans_w;  // transparent: mixing weights over encoder layer outputs
  bool use_avg = false;

  DecLayer() = default;
  DecLayer(const ModelConfig& cfg, RngStream& rng)
      : ln_self(cfg.isize),
        ln_cross(cfg.isize),
        cross_attn(cfg, rng),
        ff(cfg.isize, cfg.ff_hsize, cfg.drop, rng),
        use_avg(cfg.variant == Variant::avg_attn) {
    if (use_avg)
      avg_attn = AverageAttn<S>(cfg.isize, cfg.ff_hsize, rng);
    else
      self_attn = SelfAttn<S>(cfg, rng);
    if (cfg.variant == Variant::transparent) {
      trans_w = Tensor<S>({cfg.nlayer + 1});  // zeros: uniform mixture after softmax
      trans_w.set_requires_grad(true);
    }
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    ln_self.collect(prefix + ".ln_self", out);
    if (use_avg)
      avg_attn.collect(prefix + ".avg_attn", out);
    else
      self_attn.collect(prefix + ".self_attn", out);
    ln_cross.collect(prefix + ".ln_cross", out);
    cross_attn.collect(prefix + ".cross_attn", out);
    ff.collect(prefix + ".ff", out);
    if (trans_w.defined()) add_param(out, prefix + ".trans_w", trans_w);
  }
};

template <typename S>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const ModelConfig& cfg, Embedding<S> emb, RngStream& rng)
      : cfg_(cfg), emb_(std::move(emb)), pe_(cfg.isize, cfg.cache_len) {
    if (cfg.variant == Variant::rnmt_dec) {
      lstm1_ = LstmCell<S>(cfg.isize, cfg.isize, rng);
      rnmt_cross_ = CrossAttn<S>(cfg, rng);
      lstm2_ = LstmCell<S>(2 * cfg.isize, cfg.isize, rng);
      reduce_ = Linear<S>(2 * cfg.isize, cfg.isize, rng);
      return;
    }
    for (int64_t i = 0; i < cfg.nlayer; ++i) layers_.emplace_back(cfg, rng);
    if (cfg.variant == Variant::hierarchical)
      for (int64_t g = 0; g < cfg.nlayer / 2; ++g)
        combiners_.emplace_back(cfg.isize, g == 0 ? 2 : 3, cfg.ff_hsize, rng);
    if (cfg.norm_output) final_ln_ = LayerNormModule<S>(cfg.isize);
  }

  // Training path: full target prefix (starting with <sos>) to hidden states.
  Tensor<S> forward(const EncoderOutput<S>& enc, const IdMatrix& tgt, const RunCtx& ctx) {
    if (tgt.cols == 0 || tgt.rows == 0) throw std::invalid_argument("decoder: empty target input");
    if (cfg_.variant == Variant::rnmt_dec) return rnmt_forward(enc, tgt, ctx);

    Tensor<uint8_t> self_mask = causal_pad_mask_of(tgt);
    Tensor<S> x = embed(tgt, ctx);
    std::vector<Tensor<S>> kept;
    Tensor<S> summary;
    size_t combiner_idx = 0;
    for (size_t li = 0; li < layers_.size(); ++li) {
      const auto& layer = layers_[li];
      Tensor<S> normed = layer.ln_self.forward(x);
      Tensor<S> attn_out = layer.use_avg ? layer.avg_attn.forward(normed, ctx)
                                         : layer.self_attn.forward(normed, &self_mask, ctx);
      x = add(x, dropout(attn_out, cfg_.drop, ctx.training, ctx.rng));
      Tensor<S> enc_view = encoder_view(enc, li);
      Tensor<S> cross_out =
          layer.cross_attn.forward(layer.ln_cross.forward(x), enc_view, &enc.src_pad_mask, ctx);
      x = add(x, dropout(cross_out, cfg_.drop, ctx.training, ctx.rng));
      x = layer.ff.forward(x, ctx);
      if (cfg_.variant == Variant::hierarchical) {
        kept.push_back(x);
        if (kept.size() == 2) {
          std::vector<Tensor<S>> inputs;
          if (summary.defined()) inputs.push_back(summary);
          inputs.push_back(kept[0]);
          inputs.push_back(kept[1]);
          summary = combiners_[combiner_idx++].forward(inputs);
          kept.clear();
        }
      }
    }
    if (cfg_.variant == Variant::hierarchical) return summary;
    return cfg_.norm_output ? final_ln_.forward(x) : x;
  }

  DecodeState<S> init_state(const EncoderOutput<S>& enc) {
    DecodeState<S> st;
    st.src_mask = enc.src_pad_mask;
    if (cfg_.variant == Variant::rnmt_dec) {
      int64_t b = enc.final.dim(0);
      auto [kh, vh] = rnmt_cross_.project_kv(enc.final);
      st.cross_k.push_back(kh);
      st.cross_v.push_back(vh);
      for (int i = 0; i < 2; ++i) {
        st.rnn_h.push_back(Tensor<S>({b, 1, cfg_.isize}));
        st.rnn_c.push_back(Tensor<S>({b, 1, cfg_.isize}));
      }
      return st;
    }
    st.self_k.resize(layers_.size());
    st.self_v.resize(layers_.size());
    st.avg_sum.resize(layers_.size());
    for (size_t li = 0; li < layers_.size(); ++li) {
      auto [kh, vh] = layers_[li].cross_attn.project_kv(encoder_view(enc, li));
      st.cross_k.push_back(kh);
      st.cross_v.push_back(vh);
    }
    return st;
  }

  // One incremental step; last column of ids is the newest token, shape [B,1].
  Tensor<S> step(DecodeState<S>& st, const IdMatrix& last, const RunCtx& ctx) {
    if (last.cols != 1) throw std::invalid_argument("decoder step expects a single-column id matrix");
    if (cfg_.variant == Variant::rnmt_dec) return rnmt_step(st, last, ctx);

    Tensor<S> x = embed_step(last, st.step, ctx);
    std::vector<Tensor<S>> kept;
    Tensor<S> summary;
    size_t combiner_idx = 0;
    for (size_t li = 0; li < layers_.size(); ++li) {
      const auto& layer = layers_[li];
      Tensor<S> normed = layer.ln_self.forward(x);
      Tensor<S> attn_out;
      if (layer.use_avg) {
        int64_t count = st.step;
        attn_out = layer.avg_attn.step(normed, st.avg_sum[li], count);
      } else {
        attn_out = layer.self_attn.step(normed, st.self_k[li], st.self_v[li], ctx);
      }
      x = add(x, dropout(attn_out, cfg_.drop, ctx.training, ctx.rng));
      Tensor<S> cross_out = layer.cross_attn.forward_projected(layer.ln_cross.forward(x), st.cross_k[li],
                                                               st.cross_v[li], &st.src_mask, ctx);
      x = add(x, dropout(cross_out, cfg_.drop, ctx.training, ctx.rng));
      x = layer.ff.forward(x, ctx);
      if (cfg_.variant == Variant::hierarchical) {
        kept.push_back(x);
        if (kept.size() == 2) {
          std::vector<Tensor<S>> inputs;
          if (summary.defined()) inputs.push_back(summary);
          inputs.push_back(kept[0]);
          inputs.push_back(kept[1]);
          summary = combiners_[combiner_idx++].forward(inputs);
          kept.clear();
        }
      }
    }
    st.step++;
    if (cfg_.variant == Variant::hierarchical) return summary;
    return cfg_.norm_output ? final_ln_.forward(x) : x;
  }

  const Embedding<S>& emb() const { return emb_; }
  Embedding<S>& emb() { return emb_; }

  void warm_positions(int64_t len) { pe_.ensure(len); }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    emb_.collect(prefix + ".emb", out);
    if (cfg_.variant == Variant::rnmt_dec) {
      lstm1_.collect(prefix + ".lstm1", out);
      rnmt_cross_.collect(prefix + ".cross_attn", out);
      lstm2_.collect(prefix + ".lstm2", out);
      reduce_.collect(prefix + ".reduce", out);
      return;
    }
    for (size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + ".layers." + std::to_string(i), out);
    for (size_t i = 0; i < combiners_.size(); ++i)
      combiners_[i].collect(prefix + ".combiners." + std::to_string(i), out);
    if (cfg_.norm_output) final_ln_.collect(prefix + ".final_ln", out);
  }

 private:
  Tensor<S> embed(const IdMatrix& tgt, const RunCtx& ctx) {
    Tensor<S> x = scale(emb_.forward(tgt), static_cast<S>(std::sqrt(static_cast<double>(cfg_.isize))));
    if (cfg_.variant != Variant::rnmt_dec) x = add(x, pe_.get(tgt.cols));
    x = dropout(x, cfg_.drop, ctx.training, ctx.rng);
    return apply_noise(x, cfg_.noise_scale, ctx);
  }

  Tensor<S> embed_step(const IdMatrix& last, int64_t pos, const RunCtx& ctx) {
    Tensor<S> x = scale(emb_.forward(last), static_cast<S>(std::sqrt(static_cast<double>(cfg_.isize))));
    if (cfg_.variant != Variant::rnmt_dec) x = add(x, pe_.row(pos));
    x = dropout(x, cfg_.drop, ctx.training, ctx.rng);
    return apply_noise(x, cfg_.noise_scale, ctx);
  }

  // Transparent layers see their own softmax-weighted mix of encoder outputs.
  Tensor<S> encoder_view(const EncoderOutput<S>& enc, size_t layer_idx) const {
    if (cfg_.variant != Variant::transparent) return enc.final;
    if (enc.per_layer.empty())
      throw ConfigError("transparent decoder fed by a non-transparent encoder output");
    const Tensor<S>& w = layers_[layer_idx].trans_w;
    if (w.numel() != static_cast<int64_t>(enc.per_layer.size()))
      throw ConfigError("transparent mixing weights expect " + std::to_string(w.numel()) +
                        " encoder outputs, got " + std::to_string(enc.per_layer.size()));
    Tensor<S> sm = softmax(w, 0);
    Tensor<S> mix = scale_by(enc.per_layer[0], slice(sm, 0, 0, 1));
    for (size_t k = 1; k < enc.per_layer.size(); ++k)
      mix = add(mix, scale_by(enc.per_layer[k], slice(sm, 0, static_cast<int64_t>(k), 1)));
    return mix;
  }

  Tensor<S> rnmt_out_of(const Tensor<S>& h1, DecodeState<S>& st, const RunCtx& ctx) {
    Tensor<S> context =
        rnmt_cross_.forward_projected(h1, st.cross_k[0], st.cross_v[0], &st.src_mask, ctx);
    auto [h2, c2] = lstm2_.step(concat<S>({h1, context}, -1), st.rnn_h[1], st.rnn_c[1]);
    st.rnn_h[1] = h2;
    st.rnn_c[1] = c2;
    return tanh_op(reduce_.forward(concat<S>({context, h2}, -1)));
  }

  Tensor<S> rnmt_forward(const EncoderOutput<S>& enc, const IdMatrix& tgt, const RunCtx& ctx) {
    DecodeState<S> st = init_state(enc);
    Tensor<S> x = embed(tgt, ctx);
    std::vector<Tensor<S>> outs;
    for (int64_t t = 0; t < tgt.cols; ++t) {
      Tensor<S> x_t = slice(x, 1, t, 1);
      auto [h1, c1] = lstm1_.step(x_t, st.rnn_h[0], st.rnn_c[0]);
      st.rnn_h[0] = h1;
      st.rnn_c[0] = c1;
      outs.push_back(rnmt_out_of(h1, st, ctx));
    }
    return outs.size() == 1 ? outs[0] : concat(outs, 1);
  }

  Tensor<S> rnmt_step(DecodeState<S>& st, const IdMatrix& last, const RunCtx& ctx) {
    Tensor<S> x = embed_step(last, st.step, ctx);
    auto [h1, c1] = lstm1_.step(x, st.rnn_h[0], st.rnn_c[0]);
    st.rnn_h[0] = h1;
    st.rnn_c[0] = c1;
    st.step++;
    return rnmt_out_of(h1, st, ctx);
  }

  ModelConfig cfg_;
  Embedding<S> emb_;
  PositionalEmb<S> pe_;
  std::vector<DecLayer<S>> layers_;
  std::vector<ResidueCombiner<S>> combiners_;
  LayerNormModule<S> final_ln_;
  LstmCell<S> lstm1_, lstm2_;
  CrossAttn<S> rnmt_cross_;
  Linear<S> reduce_;
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename S>
class NMTModel {
 public:
  NMTModel() = default;
  NMTModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    RngStream rng(seed, 0);
    Embedding<S> src_emb(cfg.src_vocab, cfg.isize, rng);
    Embedding<S> tgt_emb = cfg.share_emb ? src_emb : Embedding<S>(cfg.tgt_vocab, cfg.isize, rng);
    encoder_ = Encoder<S>(cfg, src_emb, rng);
    decoder_ = Decoder<S>(cfg, tgt_emb, rng);
    if (cfg.bindDecoderEmb)
      cls_weight_ = decoder_.emb().table;
    else
      cls_weight_ = xavier_uniform<S>({cfg.tgt_vocab, cfg.isize}, cfg.isize, cfg.tgt_vocab, rng);
    cls_bias_ = Tensor<S>({cfg.tgt_vocab});
    cls_bias_.set_requires_grad(true);
  }

  const ModelConfig& config() const { return cfg_; }

  EncoderOutput<S> encode(const IdMatrix& src, const RunCtx& ctx) { return encoder_.forward(src, ctx); }

  Tensor<S> classify(const Tensor<S>& h) const { return add(matmul_nt(h, cls_weight_), cls_bias_); }

  // Teacher-forcing logits for a target prefix matrix that starts with <sos>.
  Tensor<S> decode_forward(const EncoderOutput<S>& enc, const IdMatrix& tgt_input, const RunCtx& ctx) {
    return classify(decoder_.forward(enc, tgt_input, ctx));
  }

  DecodeState<S> init_state(const EncoderOutput<S>& enc) { return decoder_.init_state(enc); }

  // Logits [B,V] for the next position given the newest tokens [B,1].
  Tensor<S> decode_step(const EncoderOutput<S>& enc, DecodeState<S>& st, const IdMatrix& last,
                        const RunCtx& ctx) {
    (void)enc;  // encoder products live in the state after init_state
    Tensor<S> h = decoder_.step(st, last, ctx);
    Tensor<S> logits = classify(h);  // [B,1,V]
    return reshape(logits, {logits.dim(0), logits.dim(2)});
  }

  // Deduplicated named parameters; tied tensors appear once.
  ParamList<S> named_params() const {
    ParamList<S> all;
    encoder_.collect("enc", all);
    decoder_.collect("dec", all);
    if (!cfg_.bindDecoderEmb) add_param(all, "cls.weight", cls_weight_);
    add_param(all, "cls.bias", cls_bias_);
    ParamList<S> out;
    std::unordered_set<const void*> seen;
    for (auto& p : all)
      if (seen.insert(p.tensor.data().get()).second) out.push_back(p);
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : named_params()) n += p.tensor.numel();
    return n;
  }

  Encoder<S>& encoder() { return encoder_; }
  Decoder<S>& decoder() { return decoder_; }
  const Tensor<S>& classifier_weight() const { return cls_weight_; }

  // Fills the positional caches up front so concurrent translations touch the
  // model read-only.
  void warm_positions(int64_t len) {
    encoder_.warm_positions(len);
    decoder_.warm_positions(len);
  }

 private:
  ModelConfig cfg_;
  Encoder<S> encoder_;
  Decoder<S> decoder_;
  Tensor<S> cls_weight_;
  Tensor<S> cls_bias_;
};

}  // namespace nmtk
