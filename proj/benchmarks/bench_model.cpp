#include <benchmark/benchmark.h>

#include "nmtk/model.hpp"

using namespace nmtk;

namespace {

ModelConfig bench_cfg(Variant variant) {
  ModelConfig cfg;
  cfg.isize = 64;
  cfg.nlayer = 2;
  cfg.ff_hsize = 128;
  cfg.nhead = 4;
  cfg.cache_len = 512;
  cfg.drop = 0.0;
  cfg.attn_drop = 0.0;
  cfg.src_vocab = 100;
  cfg.tgt_vocab = 100;
  cfg.variant = variant;
  if (variant == Variant::hierarchical) cfg.norm_output = false;
  return cfg;
}

IdMatrix random_ids(int64_t rows, int64_t cols, int32_t vocab, uint64_t stream) {
  RngStream rng(11, stream);
  IdMatrix m(rows, cols, 0);
  for (auto& v : m.v) v = 4 + static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(vocab - 4)));
  return m;
}

}  // namespace

static void BM_EncoderForward(benchmark::State& state) {
  int64_t len = state.range(0);
  NoGradGuard<float> ng;
  NMTModel<float> model(bench_cfg(Variant::standard), 1);
  RunCtx ctx;
  IdMatrix src = random_ids(8, len, 100, 1);
  for (auto _ : state) {
    EncoderOutput<float> enc = model.encode(src, ctx);
    benchmark::DoNotOptimize(enc.final.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * len);
}
BENCHMARK(BM_EncoderForward)->Arg(16)->Arg(64)->Arg(128);

// The cost of one incremental decode step as the generated prefix grows:
// self-attention reads a growing cache while the average-attention variant
// keeps constant per-step state.
template <Variant V>
static void BM_DecodeStepAtPrefix(benchmark::State& state) {
  int64_t prefix = state.range(0);
  NoGradGuard<float> ng;
  NMTModel<float> model(bench_cfg(V), 2);
  RunCtx ctx;
  IdMatrix src = random_ids(8, 24, 100, 2);
  EncoderOutput<float> enc = model.encode(src, ctx);
  DecodeState<float> st = model.init_state(enc);
  IdMatrix last(8, 1, Vocab::sos_id);
  for (int64_t t = 0; t < prefix; ++t) {
    Tensor<float> logits = model.decode_step(enc, st, last, ctx);
    for (int64_t r = 0; r < 8; ++r) last.at(r, 0) = 4 + static_cast<int32_t>(t % 90);
  }
  for (auto _ : state) {
    state.PauseTiming();
    DecodeState<float> step_state = st.clone();
    state.ResumeTiming();
    Tensor<float> logits = model.decode_step(enc, step_state, last, ctx);
    benchmark::DoNotOptimize(logits.values().data());
  }
}
BENCHMARK_TEMPLATE(BM_DecodeStepAtPrefix, Variant::standard)->Arg(4)->Arg(32)->Arg(128);
BENCHMARK_TEMPLATE(BM_DecodeStepAtPrefix, Variant::avg_attn)->Arg(4)->Arg(32)->Arg(128);

static void BM_DecodeStateBytes(benchmark::State& state) {
  int64_t prefix = state.range(0);
  NoGradGuard<float> ng;
  NMTModel<float> model(bench_cfg(Variant::avg_attn), 3);
  RunCtx ctx;
  IdMatrix src = random_ids(4, 16, 100, 3);
  for (auto _ : state) {
    EncoderOutput<float> enc = model.encode(src, ctx);
    DecodeState<float> st = model.init_state(enc);
    IdMatrix last(4, 1, Vocab::sos_id);
    for (int64_t t = 0; t < prefix; ++t) {
      Tensor<float> logits = model.decode_step(enc, st, last, ctx);
      benchmark::DoNotOptimize(logits.values().data());
    }
    state.counters["state_bytes"] = static_cast<double>(st.byte_size());
  }
}
BENCHMARK(BM_DecodeStateBytes)->Arg(8)->Arg(64);

BENCHMARK_MAIN();
