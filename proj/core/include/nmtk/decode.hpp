#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nmtk/batching.hpp"
#include "nmtk/loss.hpp"
#include "nmtk/model.hpp"

namespace nmtk {

// GNMT-style penalty; hypotheses are ranked by logp / length_penalty(len, a).
inline double length_penalty(int64_t len, double alpha) {
  if (alpha == 0.0) return 1.0;
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

// One finished (or truncated) translation candidate. Tokens exclude <sos> and
// <eos>.
struct ScoredSequence {
  std::vector<int32_t> tokens;
  double logp = 0.0;   // accumulated log probability
  double score = 0.0;  // logp / length_penalty
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Scorers: a uniform "start, step, reorder" view over the ways to get
// next-token log probabilities. Rows are hypotheses; reorder() must realign
// internal state to an arbitrary row selection.
// ---------------------------------------------------------------------------

template <typename S>
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual int64_t vocab() const = 0;
  virtual void start(const IdMatrix& src) = 0;
  // last: newest token per row, [rows,1]. Returns [rows, V] log probabilities
  // with forbidden entries at -inf (mass renormalized over allowed tokens).
  virtual Tensor<S> step_logprobs(const IdMatrix& last) = 0;
  virtual void reorder(const std::vector<int64_t>& rows) = 0;
};

namespace detail {

// -inf on forbidden logits, then log-softmax over what remains.
template <typename S>
Tensor<S> masked_logprobs(const Tensor<S>& logits, const std::vector<int32_t>& forbidden) {
  Tensor<S> x = logits;
  if (!forbidden.empty()) {
    x = x.clone();
    auto v = x.values();
    int64_t rows = x.dim(0), V = x.dim(1);
    for (int64_t r = 0; r < rows; ++r)
      for (int32_t f : forbidden)
        if (f >= 0 && f < V) v[r * V + f] = -std::numeric_limits<S>::infinity();
  }
  return log_softmax(x);
}

}  // namespace detail

template <typename S>
EncoderOutput<S> select_encoder_rows(const EncoderOutput<S>& enc, const std::vector<int64_t>& rows) {
  EncoderOutput<S> out;
  out.final = select_rows(enc.final, rows);
  for (const auto& t : enc.per_layer) out.per_layer.push_back(select_rows(t, rows));
  out.src_pad_mask = select_rows(enc.src_pad_mask, rows);
  return out;
}

// Incremental decoding against a single model.
template <typename S>
class ModelScorer : public Scorer<S> {
 public:
  ModelScorer(NMTModel<S>& model, std::vector<int32_t> forbidden)
      : model_(model), forbidden_(std::move(forbidden)) {}

  int64_t vocab() const override { return model_.config().tgt_vocab; }

  void start(const IdMatrix& src) override {
    NoGradGuard<S> guard;
    enc_ = model_.encode(src, ctx_);
    st_ = model_.init_state(enc_);
  }

  Tensor<S> step_logprobs(const IdMatrix& last) override {
    NoGradGuard<S> guard;
    return detail::masked_logprobs(model_.decode_step(enc_, st_, last, ctx_), forbidden_);
  }

  void reorder(const std::vector<int64_t>& rows) override { st_.reorder(rows); }

  const DecodeState<S>& state() const { return st_; }

 private:
  NMTModel<S>& model_;
  std::vector<int32_t> forbidden_;
  RunCtx ctx_;  // inference mode
  EncoderOutput<S> enc_;
  DecodeState<S> st_;
};

// Probability-space ensemble: the next-token distribution is the arithmetic
// mean of the member distributions, logged after averaging. A single member
// short-circuits to its own scorer so the outputs are bit-identical.
template <typename S>
class EnsembleScorer : public Scorer<S> {
 public:
  EnsembleScorer(std::vector<NMTModel<S>*> models, std::vector<int32_t> forbidden) {
    if (models.empty()) throw ConfigError("ensemble: no models given");
    for (size_t i = 1; i < models.size(); ++i)
      if (models[i]->config().tgt_vocab != models[0]->config().tgt_vocab)
        throw ConfigError("ensemble: member " + std::to_string(i) + " has target vocabulary " +
                          std::to_string(models[i]->config().tgt_vocab) + ", member 0 has " +
                          std::to_string(models[0]->config().tgt_vocab));
    for (auto* m : models) members_.push_back(std::make_unique<ModelScorer<S>>(*m, forbidden));
  }

  int64_t vocab() const override { return members_[0]->vocab(); }

  void start(const IdMatrix& src) override {
    for (auto& m : members_) m->start(src);
  }

  Tensor<S> step_logprobs(const IdMatrix& last) override {
    if (members_.size() == 1) return members_[0]->step_logprobs(last);
    Tensor<S> first = members_[0]->step_logprobs(last);
    int64_t rows = first.dim(0), V = first.dim(1);
    std::vector<double> mean(static_cast<size_t>(rows * V), 0.0);
    auto accumulate = [&](const Tensor<S>& lp) {
      auto v = lp.values();
      for (int64_t i = 0; i < rows * V; ++i) mean[static_cast<size_t>(i)] += std::exp(static_cast<double>(v[i]));
    };
    accumulate(first);
    for (size_t m = 1; m < members_.size(); ++m) accumulate(members_[m]->step_logprobs(last));
    Tensor<S> out({rows, V});
    double k = static_cast<double>(members_.size());
    for (int64_t i = 0; i < rows * V; ++i)
      out.values()[i] = static_cast<S>(std::log(mean[static_cast<size_t>(i)] / k));
    return out;
  }

  void reorder(const std::vector<int64_t>& rows) override {
    for (auto& m : members_) m->reorder(rows);
  }

 private:
  std::vector<std::unique_ptr<ModelScorer<S>>> members_;
};

// Decoding through the training forward pass only: every step re-runs
// decode_forward on the whole grown prefix and reads the last position.
// Quadratic, but needs nothing from a variant beyond its forward.
template <typename S>
class PrefixScorer : public Scorer<S> {
 public:
  PrefixScorer(NMTModel<S>& model, std::vector<int32_t> forbidden)
      : model_(model), forbidden_(std::move(forbidden)) {}

  int64_t vocab() const override { return model_.config().tgt_vocab; }

  void start(const IdMatrix& src) override {
    NoGradGuard<S> guard;
    enc_ = model_.encode(src, ctx_);
    prefix_ = IdMatrix();
  }

  Tensor<S> step_logprobs(const IdMatrix& last) override {
    NoGradGuard<S> guard;
    if (prefix_.rows == 0) {
      prefix_ = last;
    } else {
      if (last.rows != prefix_.rows)
        throw std::invalid_argument("prefix scorer: row count changed without reorder");
      IdMatrix grown(prefix_.rows, prefix_.cols + 1);
      for (int64_t r = 0; r < prefix_.rows; ++r) {
        for (int64_t c = 0; c < prefix_.cols; ++c) grown.at(r, c) = prefix_.at(r, c);
        grown.at(r, prefix_.cols) = last.at(r, 0);
      }
      prefix_ = std::move(grown);
    }
    Tensor<S> logits = model_.decode_forward(enc_, prefix_, ctx_);  // [rows,T,V]
    Tensor<S> last_pos = slice(logits, 1, prefix_.cols - 1, 1);
    Tensor<S> flat = reshape(last_pos, {logits.dim(0), logits.dim(2)});
    return detail::masked_logprobs(flat, forbidden_);
  }

  void reorder(const std::vector<int64_t>& rows) override {
    enc_ = select_encoder_rows(enc_, rows);
    IdMatrix next(static_cast<int64_t>(rows.size()), prefix_.cols);
    for (size_t r = 0; r < rows.size(); ++r)
      for (int64_t c = 0; c < prefix_.cols; ++c) next.at(static_cast<int64_t>(r), c) = prefix_.at(rows[r], c);
    prefix_ = std::move(next);
  }

 private:
  NMTModel<S>& model_;
  std::vector<int32_t> forbidden_;
  RunCtx ctx_;
  EncoderOutput<S> enc_;
  IdMatrix prefix_;
};

// ---------------------------------------------------------------------------
// Greedy decoding over a batch. Finished rows are dropped from the working
// set, which keeps per-sentence results identical to one-by-one decoding.
// ---------------------------------------------------------------------------

template <typename S>
std::vector<ScoredSequence> greedy_decode_batch(Scorer<S>& scorer, const IdMatrix& src, int64_t max_len) {
  if (max_len < 1) throw ConfigError("decode: max_len must be at least 1");
  int64_t B = src.rows;
  scorer.start(src);

  std::vector<ScoredSequence> out(static_cast<size_t>(B));
  std::vector<int64_t> owner(static_cast<size_t>(B));  // working row -> sentence
  for (int64_t b = 0; b < B; ++b) owner[static_cast<size_t>(b)] = b;
  IdMatrix last(B, 1, std::vector<int32_t>(static_cast<size_t>(B), Vocab::sos_id));

  for (int64_t t = 0; t < max_len && !owner.empty(); ++t) {
    Tensor<S> lp = scorer.step_logprobs(last);
    int64_t rows = lp.dim(0), V = lp.dim(1);
    auto v = lp.values();
    std::vector<int64_t> keep;
    std::vector<int32_t> next_tok;
    for (int64_t r = 0; r < rows; ++r) {
      int64_t best = -1;
      for (int64_t c = 0; c < V; ++c) {
        if (std::isinf(static_cast<double>(v[r * V + c])) && v[r * V + c] < S(0)) continue;
        if (best < 0 || v[r * V + c] > v[r * V + best]) best = c;
      }
      if (best < 0) throw std::runtime_error("decode: every token is forbidden");
      ScoredSequence& dst = out[static_cast<size_t>(owner[static_cast<size_t>(r)])];
      dst.logp += static_cast<double>(v[r * V + best]);
      if (best == Vocab::eos_id) continue;  // finished; leave this row behind
      dst.tokens.push_back(static_cast<int32_t>(best));
      dst.truncated = t + 1 == max_len;
      keep.push_back(r);
      next_tok.push_back(static_cast<int32_t>(best));
    }
    if (keep.empty()) break;
    if (static_cast<int64_t>(keep.size()) != rows) {
      scorer.reorder(keep);
      std::vector<int64_t> next_owner;
      for (int64_t r : keep) next_owner.push_back(owner[static_cast<size_t>(r)]);
      owner = std::move(next_owner);
    }
    last = IdMatrix(static_cast<int64_t>(next_tok.size()), 1, next_tok);
  }
  for (auto& s : out) s.score = s.logp;  // greedy reports the raw log probability
  return out;
}

// ---------------------------------------------------------------------------
// Beam decoding over a batch. Per step each live hypothesis expands over the
// vocabulary; the top beam_size candidates per sentence survive; candidates
// ending in <eos> retire into the sentence's completed pool. Search stops
// when no live hypothesis could still beat the pool's best penalized score,
// or at max_len. Ties: higher score, then shorter, then lower token ids.
// ---------------------------------------------------------------------------

namespace detail {

struct BeamHyp {
  std::vector<int32_t> tokens;  // generated tokens, no <sos>/<eos>
  double logp = 0.0;
  int64_t row = -1;  // current row in the scorer state
};

inline bool sequence_less(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline bool result_order(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return sequence_less(a.tokens, b.tokens);
}

}  // namespace detail

template <typename S>
std::vector<std::vector<ScoredSequence>> beam_decode_batch(Scorer<S>& scorer, const IdMatrix& src,
                                                           const DecodeConfig& cfg) {
  cfg.validate();
  int64_t B = src.rows;
  int64_t beam = cfg.beam_size;
  double alpha = cfg.length_penalty;
  double lp_max = length_penalty(cfg.max_len, alpha);
  scorer.start(src);

  std::vector<std::vector<detail::BeamHyp>> alive(static_cast<size_t>(B));
  std::vector<std::vector<ScoredSequence>> done(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) alive[static_cast<size_t>(b)].push_back({{}, 0.0, b});

  struct Cand {
    std::vector<int32_t> tokens;
    double logp;
    size_t hyp;
    int32_t tok;
  };

  for (int64_t t = 0; t < cfg.max_len; ++t) {
    // rows currently owned by live hypotheses, in (sentence, hyp) order
    std::vector<int32_t> feed;
    int64_t rows = 0;
    for (auto& hs : alive)
      for (auto& h : hs) {
        feed.push_back(t == 0 ? Vocab::sos_id : h.tokens.back());
        h.row = rows++;
      }
    if (rows == 0) break;
    IdMatrix last(rows, 1, feed);
    Tensor<S> lp = scorer.step_logprobs(last);
    auto v = lp.values();
    int64_t V = lp.dim(1);

    std::vector<int64_t> keep_rows;
    for (int64_t b = 0; b < B; ++b) {
      auto& hs = alive[static_cast<size_t>(b)];
      if (hs.empty()) continue;
      std::vector<Cand> cands;
      for (size_t hi = 0; hi < hs.size(); ++hi) {
        const S* row = v.data() + hs[hi].row * V;
        // only the best beam tokens of a hypothesis can reach the overall top
        std::vector<int32_t> idx;
        idx.reserve(static_cast<size_t>(V));
        for (int32_t c = 0; c < V; ++c)
          if (!(std::isinf(static_cast<double>(row[c])) && row[c] < S(0))) idx.push_back(c);
        size_t take = std::min<size_t>(idx.size(), static_cast<size_t>(beam));
        std::partial_sort(idx.begin(), idx.begin() + static_cast<int64_t>(take), idx.end(),
                          [&](int32_t a, int32_t c) {
                            if (row[a] != row[c]) return row[a] > row[c];
                            return a < c;
                          });
        idx.resize(take);
        for (int32_t c : idx) {
          Cand cd;
          cd.tokens = hs[hi].tokens;
          if (c != Vocab::eos_id) cd.tokens.push_back(c);
          cd.logp = hs[hi].logp + static_cast<double>(row[c]);
          cd.hyp = hi;
          cd.tok = c;
          cands.push_back(std::move(cd));
        }
      }
      int64_t gen_len = t + 1;  // all candidates this step share one length
      double lp_here = length_penalty(gen_len, alpha);
      std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& c) {
        if (a.logp != c.logp) return a.logp > c.logp;
        bool a_end = a.tok == Vocab::eos_id, c_end = c.tok == Vocab::eos_id;
        if (a_end != c_end) return a_end;  // finishing is the shorter outcome
        return detail::sequence_less(a.tokens, c.tokens);
      });
      if (static_cast<int64_t>(cands.size()) > beam) cands.resize(static_cast<size_t>(beam));

      std::vector<detail::BeamHyp> next;
      for (auto& cd : cands) {
        if (cd.tok == Vocab::eos_id) {
          ScoredSequence s;
          s.tokens = std::move(cd.tokens);
          s.logp = cd.logp;
          s.score = cd.logp / lp_here;
          done[static_cast<size_t>(b)].push_back(std::move(s));
        } else {
          detail::BeamHyp h;
          h.tokens = std::move(cd.tokens);
          h.logp = cd.logp;
          h.row = hs[cd.hyp].row;  // old row: reorder target below
          next.push_back(std::move(h));
        }
      }
      // optimistic pruning: even with perfect continuations a live hypothesis
      // cannot beat the pool's best once logp / lp(max_len) falls below it
      if (!done[static_cast<size_t>(b)].empty()) {
        double best_done = -std::numeric_limits<double>::infinity();
        for (const auto& s : done[static_cast<size_t>(b)]) best_done = std::max(best_done, s.score);
        std::vector<detail::BeamHyp> still;
        for (auto& h : next) {
          double optimistic = h.logp / (alpha == 0.0 ? 1.0 : lp_max);
          if (optimistic > best_done) still.push_back(std::move(h));
        }
        next = std::move(still);
      }
      for (auto& h : next) keep_rows.push_back(h.row);
      hs = std::move(next);
    }

    if (keep_rows.empty()) break;
    // skip the reorder when the surviving rows are exactly the identity
    bool identity = static_cast<int64_t>(keep_rows.size()) == rows;
    for (size_t i = 0; identity && i < keep_rows.size(); ++i)
      if (keep_rows[i] != static_cast<int64_t>(i)) identity = false;
    if (!identity) scorer.reorder(keep_rows);
  }

  for (int64_t b = 0; b < B; ++b) {
    auto& pool = done[static_cast<size_t>(b)];
    if (pool.empty()) {
      // nothing finished under max_len: surface the live hypotheses, flagged
      for (auto& h : alive[static_cast<size_t>(b)]) {
        ScoredSequence s;
        s.tokens = std::move(h.tokens);
        s.logp = h.logp;
        s.score = h.logp / length_penalty(std::max<int64_t>(1, static_cast<int64_t>(s.tokens.size())), alpha);
        s.truncated = true;
        pool.push_back(std::move(s));
      }
    }
    std::sort(pool.begin(), pool.end(), detail::result_order);
  }
  return done;
}

// ---------------------------------------------------------------------------
// Convenience wrappers
// ---------------------------------------------------------------------------

template <typename S>
std::vector<ScoredSequence> greedy_decode(NMTModel<S>& model, const IdMatrix& src, int64_t max_len,
                                          const std::vector<int32_t>& forbidden) {
  ModelScorer<S> scorer(model, forbidden);
  return greedy_decode_batch(scorer, src, max_len);
}

template <typename S>
std::vector<std::vector<ScoredSequence>> beam_decode(NMTModel<S>& model, const IdMatrix& src,
                                                     const DecodeConfig& cfg,
                                                     const std::vector<int32_t>& forbidden) {
  ModelScorer<S> scorer(model, forbidden);
  return beam_decode_batch(scorer, src, cfg);
}

template <typename S>
std::vector<std::vector<ScoredSequence>> ensemble_decode(std::vector<NMTModel<S>*> models,
                                                         const IdMatrix& src, const DecodeConfig& cfg,
                                                         const std::vector<int32_t>& forbidden) {
  EnsembleScorer<S> scorer(std::move(models), forbidden);
  return beam_decode_batch(scorer, src, cfg);
}

template <typename S>
std::vector<ScoredSequence> train_greedy_decode(NMTModel<S>& model, const IdMatrix& src, int64_t max_len,
                                                const std::vector<int32_t>& forbidden) {
  PrefixScorer<S> scorer(model, forbidden);
  return greedy_decode_batch(scorer, src, max_len);
}

template <typename S>
std::vector<std::vector<ScoredSequence>> train_beam_decode(NMTModel<S>& model, const IdMatrix& src,
                                                           const DecodeConfig& cfg,
                                                           const std::vector<int32_t>& forbidden) {
  PrefixScorer<S> scorer(model, forbidden);
  return beam_decode_batch(scorer, src, cfg);
}

// ---------------------------------------------------------------------------
// Corpus ranking: per-pair smoothed cross entropy per non-pad target token,
// ascending (cleanest first). Stable by original index on ties.
// ---------------------------------------------------------------------------

struct RankedPair {
  size_t index = 0;
  double loss = 0.0;
};

template <typename S>
std::vector<RankedPair> rank_corpus(NMTModel<S>& model, const std::vector<EncodedPair>& pairs,
                                    const SmoothingSpec& spec) {
  NoGradGuard<S> guard;
  RunCtx ctx;
  std::vector<RankedPair> out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& pr = pairs[i];
    if (pr.src.empty() || pr.tgt.empty())
      throw std::invalid_argument("rank: pair " + std::to_string(i) + " has an empty side");
    IdMatrix src(1, static_cast<int64_t>(pr.src.size()), pr.src);
    std::vector<int32_t> in_ids{Vocab::sos_id};
    in_ids.insert(in_ids.end(), pr.tgt.begin(), pr.tgt.end());
    std::vector<int32_t> out_ids(pr.tgt.begin(), pr.tgt.end());
    out_ids.push_back(Vocab::eos_id);
    IdMatrix tgt_in(1, static_cast<int64_t>(in_ids.size()), in_ids);
    IdMatrix tgt_out(1, static_cast<int64_t>(out_ids.size()), out_ids);
    auto enc = model.encode(src, ctx);
    auto logits = model.decode_forward(enc, tgt_in, ctx);
    auto loss = smoothed_loss_sum(logits, tgt_out, spec);
    out.push_back({i, loss.sum_loss.item() / static_cast<double>(loss.tokens)});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedPair& a, const RankedPair& b) {
    if (a.loss != b.loss) return a.loss < b.loss;
    return a.index < b.index;
  });
  return out;
}

}  // namespace nmtk
