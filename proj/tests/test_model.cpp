#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "nmtk/loss.hpp"
#include "nmtk/model.hpp"
#include "testutil.hpp"

using namespace nmtk;

namespace {

ModelConfig tiny_cfg(Variant v) {
  ModelConfig c;
  c.isize = 8;
  c.nlayer = 2;
  c.ff_hsize = 16;
  c.nhead = 2;
  c.cache_len = 32;
  c.drop = 0.0;
  c.attn_drop = 0.0;
  c.src_vocab = 11;
  c.tgt_vocab = 13;
  c.variant = v;
  if (v == Variant::hierarchical) c.norm_output = false;
  return c;
}

const Variant kAllVariants[] = {Variant::standard, Variant::avg_attn, Variant::transparent,
                                Variant::hierarchical, Variant::rnmt_dec};

// Loss of a fixed toy batch as a function of the parameters; rebuilt on every
// call so finite differences see the perturbed values.
template <typename S>
Tensor<S> toy_batch_loss(NMTModel<S>& model) {
  IdMatrix src(2, 4, {5, 6, 7, 2, 8, 9, 2, 0});
  IdMatrix tgt_in(2, 3, {1, 4, 5, 1, 6, 0});
  IdMatrix tgt_out(2, 3, {4, 5, 2, 6, 2, 0});
  SmoothingSpec spec;
  RunCtx ctx;  // eval mode; dropout and noise are zero in these configs anyway
  auto enc = model.encode(src, ctx);
  auto logits = model.decode_forward(enc, tgt_in, ctx);
  return smoothed_loss_sum(logits, tgt_out, spec).sum_loss;
}

}  // namespace

TEST_CASE("finite differences confirm the full training gradient of every variant") {
  for (Variant v : kAllVariants) {
    CAPTURE(variant_to_string(v));
    NMTModel<double> model(tiny_cfg(v), 7 + static_cast<uint64_t>(v));
    std::vector<Tensor<double>> params;
    for (auto& p : model.named_params()) params.push_back(p.tensor);
    auto res = testutil::fd_gradcheck([&]() { return toy_batch_loss(model); }, params);
    INFO(res.worst);
    CHECK(res.max_rel_err < 1e-3);
  }
}

TEST_CASE("incremental decoding matches the teacher-forcing forward pass") {
  for (Variant v : kAllVariants) {
    CAPTURE(variant_to_string(v));
    NMTModel<double> model(tiny_cfg(v), 31 + static_cast<uint64_t>(v));
    NoGradGuard<double> guard;
    RunCtx ctx;
    IdMatrix src(2, 5, {4, 5, 6, 7, 2, 8, 9, 10, 2, 0});
    IdMatrix tgt_in(2, 4, {1, 5, 6, 7, 1, 8, 9, 4});
    auto enc = model.encode(src, ctx);
    Tensor<double> full = model.decode_forward(enc, tgt_in, ctx);  // [2,4,V]
    REQUIRE(full.shape() == std::vector<int64_t>{2, 4, 13});

    auto st = model.init_state(enc);
    for (int64_t t = 0; t < tgt_in.cols; ++t) {
      IdMatrix last(2, 1, {tgt_in.at(0, t), tgt_in.at(1, t)});
      Tensor<double> step = model.decode_step(enc, st, last, ctx);  // [2,V]
      REQUIRE(step.shape() == std::vector<int64_t>{2, 13});
      double worst = 0.0;
      for (int64_t b = 0; b < 2; ++b)
        for (int64_t c = 0; c < 13; ++c)
          worst = std::max(worst,
                           std::fabs(step.values()[b * 13 + c] - full.values()[(b * 4 + t) * 13 + c]));
      CAPTURE(t);
      CHECK(worst < 1e-9);
    }
  }
}

TEST_CASE("future target tokens cannot influence earlier positions") {
  for (Variant v : kAllVariants) {
    CAPTURE(variant_to_string(v));
    NMTModel<double> model(tiny_cfg(v), 100 + static_cast<uint64_t>(v));
    NoGradGuard<double> guard;
    RunCtx ctx;
    IdMatrix src(1, 4, {5, 6, 7, 2});
    auto enc = model.encode(src, ctx);
    IdMatrix a(1, 4, {1, 5, 6, 7});
    IdMatrix b(1, 4, {1, 5, 6, 9});  // only the last position differs
    Tensor<double> la = model.decode_forward(enc, a, ctx);
    Tensor<double> lb = model.decode_forward(enc, b, ctx);
    for (int64_t t = 0; t < 3; ++t)
      for (int64_t c = 0; c < 13; ++c) {
        CAPTURE(t);
        CHECK(la.values()[t * 13 + c] == lb.values()[t * 13 + c]);
      }
  }
}

TEST_CASE("appended source padding leaves the decoder output untouched") {
  for (Variant v : kAllVariants) {
    CAPTURE(variant_to_string(v));
    NMTModel<double> model(tiny_cfg(v), 55 + static_cast<uint64_t>(v));
    NoGradGuard<double> guard;
    RunCtx ctx;
    IdMatrix src(1, 4, {5, 6, 7, 2});
    IdMatrix padded(1, 6, {5, 6, 7, 2, 0, 0});
    IdMatrix tgt_in(1, 3, {1, 5, 6});
    Tensor<double> la = model.decode_forward(model.encode(src, ctx), tgt_in, ctx);
    Tensor<double> lb = model.decode_forward(model.encode(padded, ctx), tgt_in, ctx);
    REQUIRE(la.numel() == lb.numel());
    for (int64_t i = 0; i < la.numel(); ++i) CHECK(la.values()[i] == lb.values()[i]);
  }
}

TEST_CASE("self attention agrees with a longhand per-head computation") {
  ModelConfig cfg = tiny_cfg(Variant::standard);
  cfg.isize = 4;
  cfg.nhead = 2;
  RngStream rng(9, 0);
  SelfAttn<double> attn(cfg, rng);
  NoGradGuard<double> guard;
  RunCtx ctx;

  const int64_t T = 3, d = 4, hd = 2;
  Tensor<double> x = uniform_init<double>({1, T, d}, 0.5, rng);
  Tensor<uint8_t> mask({1, 1, T, T});
  for (int64_t q = 0; q < T; ++q)
    for (int64_t k = 0; k < T; ++k) mask.values()[q * T + k] = k > q ? 1 : 0;
  Tensor<double> got = attn.forward(x, &mask, ctx);

  // Longhand: project, split heads, attend per query with the causal mask,
  // merge, project out.
  auto project = [&](const Tensor<double>& w, const Tensor<double>& b, int64_t row0, int64_t nrows,
                     const std::vector<double>& in) {
    std::vector<double> out(static_cast<size_t>(nrows), 0.0);
    for (int64_t r = 0; r < nrows; ++r) {
      double acc = b.defined() ? b.values()[row0 + r] : 0.0;
      for (int64_t c = 0; c < d; ++c) acc += w.values()[(row0 + r) * d + c] * in[static_cast<size_t>(c)];
      out[static_cast<size_t>(r)] = acc;
    }
    return out;
  };

  std::vector<std::vector<double>> q(T), k(T), v(T);
  for (int64_t t = 0; t < T; ++t) {
    std::vector<double> in(x.values().begin() + t * d, x.values().begin() + (t + 1) * d);
    q[t] = project(attn.wqkv.weight, attn.wqkv.bias, 0, d, in);
    k[t] = project(attn.wqkv.weight, attn.wqkv.bias, d, d, in);
    v[t] = project(attn.wqkv.weight, attn.wqkv.bias, 2 * d, d, in);
  }
  for (int64_t t = 0; t < T; ++t) {
    std::vector<double> merged(static_cast<size_t>(d));
    for (int64_t h = 0; h < 2; ++h) {
      std::vector<double> qh(q[t].begin() + h * hd, q[t].begin() + (h + 1) * hd);
      std::vector<std::vector<double>> kh, vh;
      std::vector<bool> masked;
      for (int64_t s = 0; s < T; ++s) {
        kh.emplace_back(k[s].begin() + h * hd, k[s].begin() + (h + 1) * hd);
        vh.emplace_back(v[s].begin() + h * hd, v[s].begin() + (h + 1) * hd);
        masked.push_back(s > t);
      }
      std::vector<double> head = testutil::naive_attention(qh, kh, vh, masked);
      std::copy(head.begin(), head.end(), merged.begin() + h * hd);
    }
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    for (int64_t r = 0; r < d; ++r) {
      double acc = attn.wo.bias.values()[r];
      for (int64_t c = 0; c < d; ++c) acc += attn.wo.weight.values()[r * d + c] * merged[static_cast<size_t>(c)];
      out[static_cast<size_t>(r)] = acc;
    }
    for (int64_t r = 0; r < d; ++r)
      CHECK(got.values()[t * d + r] == doctest::Approx(out[static_cast<size_t>(r)]).epsilon(1e-9));
  }
}

TEST_CASE("transparent encoders expose one output per layer plus the embedding") {
  RunCtx ctx;
  NoGradGuard<float> guard;
  NMTModel<float> trans(tiny_cfg(Variant::transparent), 3);
  IdMatrix src(1, 3, {5, 6, 2});
  auto enc = trans.encode(src, ctx);
  CHECK(enc.per_layer.size() == 3);  // nlayer + 1

  NMTModel<float> plain(tiny_cfg(Variant::standard), 3);
  CHECK(plain.encode(src, ctx).per_layer.empty());
}

TEST_CASE("weight tying changes the parameter budget exactly as expected") {
  ModelConfig bound = tiny_cfg(Variant::standard);
  ModelConfig unbound = bound;
  unbound.bindDecoderEmb = false;
  int64_t n_bound = NMTModel<float>(bound, 1).param_count();
  int64_t n_unbound = NMTModel<float>(unbound, 1).param_count();
  CHECK(n_unbound - n_bound == unbound.tgt_vocab * unbound.isize);

  ModelConfig shared = bound;
  shared.tgt_vocab = shared.src_vocab;
  ModelConfig separate = shared;
  shared.share_emb = true;
  int64_t n_shared = NMTModel<float>(shared, 1).param_count();
  int64_t n_separate = NMTModel<float>(separate, 1).param_count();
  CHECK(n_separate - n_shared == shared.src_vocab * shared.isize);
}

TEST_CASE("named parameters are deduplicated and well named") {
  NMTModel<float> model(tiny_cfg(Variant::standard), 1);
  auto params = model.named_params();
  bool has_cls_weight = false, has_dec_emb = false, has_enc_qkv = false;
  std::vector<const void*> seen;
  for (const auto& p : params) {
    if (p.name == "cls.weight") has_cls_weight = true;
    if (p.name == "dec.emb.weight") has_dec_emb = true;
    if (p.name == "enc.layers.0.attn.wqkv.weight") has_enc_qkv = true;
    seen.push_back(p.tensor.data().get());
  }
  CHECK_FALSE(has_cls_weight);  // tied to the decoder embedding
  CHECK(has_dec_emb);
  CHECK(has_enc_qkv);
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());

  ModelConfig shared = tiny_cfg(Variant::standard);
  shared.tgt_vocab = shared.src_vocab;
  shared.share_emb = true;
  auto shared_params = NMTModel<float>(shared, 1).named_params();
  int emb_entries = 0;
  for (const auto& p : shared_params)
    if (p.name == "enc.emb.weight" || p.name == "dec.emb.weight") emb_entries++;
  CHECK(emb_entries == 1);
}

TEST_CASE("every variant initializes to finite parameters and logits") {
  RunCtx ctx;
  for (Variant v : kAllVariants) {
    CAPTURE(variant_to_string(v));
    NMTModel<float> model(tiny_cfg(v), 200 + static_cast<uint64_t>(v));
    for (const auto& p : model.named_params()) CHECK(all_finite(p.tensor));
    NoGradGuard<float> guard;
    IdMatrix src(2, 3, {5, 6, 2, 7, 2, 0});
    IdMatrix tgt_in(2, 2, {1, 5, 1, 6});
    auto logits = model.decode_forward(model.encode(src, ctx), tgt_in, ctx);
    CHECK(all_finite(logits));
  }
}

TEST_CASE("average attention keeps a fixed-size decode state while caches grow") {
  RunCtx ctx;
  auto run_steps = [&](NMTModel<float>& model, int64_t steps) {
    NoGradGuard<float> guard;
    IdMatrix src(1, 4, {5, 6, 7, 2});
    auto enc = model.encode(src, ctx);
    auto st = model.init_state(enc);
    std::vector<size_t> sizes;
    for (int64_t t = 0; t < steps; ++t) {
      IdMatrix last(1, 1, {static_cast<int32_t>(4 + t % 3)});
      model.decode_step(enc, st, last, ctx);
      sizes.push_back(st.byte_size());
    }
    return sizes;
  };

  NMTModel<float> avg(tiny_cfg(Variant::avg_attn), 5);
  auto avg_sizes = run_steps(avg, 128);
  CHECK(avg_sizes[0] == avg_sizes[127]);
  CHECK(avg_sizes[0] == avg_sizes[63]);

  NMTModel<float> std_model(tiny_cfg(Variant::standard), 5);
  auto std_sizes = run_steps(std_model, 128);
  CHECK(std_sizes[127] > std_sizes[0]);
  // the growth is exactly the per-step K and V cache payload
  size_t per_step = std_sizes[1] - std_sizes[0];
  CHECK(std_sizes[127] - std_sizes[0] == 127 * per_step);
}

TEST_CASE("hierarchical models refuse inconsistent settings at build time") {
  ModelConfig cfg = tiny_cfg(Variant::hierarchical);
  cfg.norm_output = true;
  CHECK_THROWS_AS(NMTModel<float>(cfg, 1), ConfigError);
  cfg.norm_output = false;
  cfg.nlayer = 3;
  CHECK_THROWS_AS(NMTModel<float>(cfg, 1), ConfigError);
}

TEST_CASE("decode state cloning isolates the mutable caches") {
  RunCtx ctx;
  NoGradGuard<float> guard;
  NMTModel<float> model(tiny_cfg(Variant::standard), 77);
  IdMatrix src(1, 3, {5, 6, 2});
  auto enc = model.encode(src, ctx);
  auto st = model.init_state(enc);
  IdMatrix last(1, 1, {1});
  model.decode_step(enc, st, last, ctx);

  auto copy = st.clone();
  IdMatrix next(1, 1, {5});
  Tensor<float> a = model.decode_step(enc, st, next, ctx);
  // advancing the original must not have touched the clone
  CHECK(copy.step == 1);
  CHECK(copy.self_k[0].dim(2) == 1);
  CHECK(st.self_k[0].dim(2) == 2);
  Tensor<float> b = model.decode_step(enc, copy, next, ctx);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("decode state reordering repeats and selects batch rows") {
  RunCtx ctx;
  NoGradGuard<float> guard;
  NMTModel<float> model(tiny_cfg(Variant::standard), 78);
  IdMatrix src(2, 3, {5, 6, 2, 7, 8, 2});
  auto enc = model.encode(src, ctx);
  auto st = model.init_state(enc);
  IdMatrix last(2, 1, {1, 1});
  model.decode_step(enc, st, last, ctx);

  st.reorder({1, 1, 0});
  CHECK(st.self_k[0].dim(0) == 3);
  CHECK(st.cross_k[0].dim(0) == 3);
  CHECK(st.src_mask.dim(0) == 3);
  // rows 0 and 1 of the reordered state are copies of old row 1
  auto kv = st.self_k[0].values();
  int64_t block = st.self_k[0].numel() / 3;
  for (int64_t i = 0; i < block; ++i) CHECK(kv[i] == kv[block + i]);
}

TEST_CASE("models reject empty inputs and bad step shapes") {
  RunCtx ctx;
  NoGradGuard<float> guard;
  NMTModel<float> model(tiny_cfg(Variant::standard), 79);
  IdMatrix src(1, 3, {5, 6, 2});
  auto enc = model.encode(src, ctx);
  auto st = model.init_state(enc);
  IdMatrix two_cols(1, 2, {1, 5});
  CHECK_THROWS_AS(model.decode_step(enc, st, two_cols, ctx), std::invalid_argument);
  IdMatrix empty;
  CHECK_THROWS_AS(model.encode(empty, ctx), std::invalid_argument);
}
