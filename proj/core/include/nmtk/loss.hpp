#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "nmtk/common.hpp"
#include "nmtk/tensor.hpp"
#include "nmtk/vocab.hpp"

namespace nmtk {

// Label-smoothed cross entropy over a batch of teacher-forcing logits.
//
// The target distribution per non-pad token: gold gets 1 - smoothing, the
// rest is spread uniformly over the allowed non-gold classes; forbidden
// indexes get exactly zero. Returns the *sum* over tokens so several batches
// can be accumulated and normalized by their joint token count.
template <typename S>
struct SmoothedLoss {
  Tensor<S> sum_loss;  // scalar, graph-connected to the logits
  int64_t tokens = 0;  // non-pad gold tokens
  int64_t errors = 0;  // argmax mismatches over non-pad tokens
};

// Builds the smoothing distribution once: q_gold and q_other plus the
// allowed-class count, shared by loss and rankers.
struct SmoothingSpec {
  double smoothing = 0.1;
  std::vector<int32_t> forbidden{0, 1};  // must be sorted ascending

  bool is_forbidden(int32_t id) const {
    return std::binary_search(forbidden.begin(), forbidden.end(), id);
  }

  int64_t allowed_nongold(int64_t vocab) const {
    int64_t nforb = 0;
    for (int32_t f : forbidden)
      if (f >= 0 && f < vocab) nforb++;
    return vocab - nforb - 1;
  }
};

// logits [B,T,V], gold [B,T] (pad entries skipped). Gold inside the forbidden
// set is a contract violation.
template <typename S>
SmoothedLoss<S> smoothed_loss_sum(const Tensor<S>& logits, const IdMatrix& gold, const SmoothingSpec& spec) {
  if (logits.rank() != 3)
    throw std::invalid_argument("smoothed loss: logits must be [batch, time, vocab], got " +
                                shape_to_string(logits.shape()));
  int64_t B = logits.dim(0), T = logits.dim(1), V = logits.dim(2);
  if (gold.rows != B || gold.cols != T)
    throw std::invalid_argument("smoothed loss: gold ids " + std::to_string(gold.rows) + "x" +
                                std::to_string(gold.cols) + " do not match logits " +
                                shape_to_string(logits.shape()));
  int64_t allowed = spec.allowed_nongold(V);
  if (spec.smoothing > 0.0 && allowed <= 0)
    throw std::invalid_argument("smoothed loss: no allowed non-gold classes to carry smoothing mass");
  double q_gold = 1.0 - spec.smoothing;
  double q_other = allowed > 0 ? spec.smoothing / static_cast<double>(allowed) : 0.0;

  SmoothedLoss<S> res;
  res.sum_loss = Tensor<S>({1});
  auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(B * T * V));
  auto lv = logits.values();
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < T; ++t) {
      int32_t g = gold.at(b, t);
      if (g == Vocab::pad_id) continue;
      if (g < 0 || g >= V)
        throw std::invalid_argument("smoothed loss: gold id " + std::to_string(g) + " outside vocabulary of " +
                                    std::to_string(V));
      if (spec.is_forbidden(g))
        throw std::invalid_argument("smoothed loss: gold id " + std::to_string(g) +
                                    " is in the forbidden index set");
      const S* row = lv.data() + (b * T + t) * V;
      S mx = row[0];
      for (int64_t c = 1; c < V; ++c) mx = std::max(mx, row[c]);
      double denom = 0.0;
      for (int64_t c = 0; c < V; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
      double lse = static_cast<double>(mx) + std::log(denom);
      S* prow = probs->data() + (b * T + t) * V;
      int64_t amax = 0;
      double tok_loss = 0.0;
      for (int64_t c = 0; c < V; ++c) {
        double logp = static_cast<double>(row[c]) - lse;
        prow[c] = static_cast<S>(std::exp(logp));
        if (row[c] > row[amax]) amax = c;
        double q = c == g ? q_gold : (spec.is_forbidden(static_cast<int32_t>(c)) ? 0.0 : q_other);
        if (q > 0.0) tok_loss -= q * logp;
      }
      total += tok_loss;
      res.tokens++;
      if (amax != g) res.errors++;
    }
  res.sum_loss.values()[0] = static_cast<S>(total);

  if (grad_enabled<S>() && logits.requires_grad()) {
    res.sum_loss.set_requires_grad(true);
    auto ld = logits.data();
    auto od = res.sum_loss.data();
    IdMatrix gold_copy = gold;
    SmoothingSpec spec_copy = spec;
    Tape<S>::instance().record(od, [ld, od, probs, gold_copy, spec_copy, B, T, V, q_gold, q_other]() {
      if (od->grad.empty()) return;
      S g_up = od->grad[0];
      if (g_up == S(0)) return;
      ld->ensure_grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
          int32_t g = gold_copy.at(b, t);
          if (g == Vocab::pad_id) continue;
          const S* prow = probs->data() + (b * T + t) * V;
          S* grow = ld->grad.data() + (b * T + t) * V;
          for (int64_t c = 0; c < V; ++c) {
            double q = c == g ? q_gold : (spec_copy.is_forbidden(static_cast<int32_t>(c)) ? 0.0 : q_other);
            grow[c] += g_up * static_cast<S>(static_cast<double>(prow[c]) - q);
          }
        }
    });
  }
  return res;
}

// The explicit smoothing distribution for one gold id; test and ranking aid.
inline std::vector<double> smoothing_distribution(int64_t vocab, int32_t gold, const SmoothingSpec& spec) {
  int64_t allowed = spec.allowed_nongold(vocab);
  double q_other = allowed > 0 ? spec.smoothing / static_cast<double>(allowed) : 0.0;
  std::vector<double> q(static_cast<size_t>(vocab), 0.0);
  for (int64_t c = 0; c < vocab; ++c) {
    if (c == gold)
      q[static_cast<size_t>(c)] = 1.0 - spec.smoothing;
    else if (!spec.is_forbidden(static_cast<int32_t>(c)))
      q[static_cast<size_t>(c)] = q_other;
  }
  return q;
}

}  // namespace nmtk
