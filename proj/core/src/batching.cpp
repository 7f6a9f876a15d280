#include "nmtk/batching.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "nmtk/rng.hpp"

namespace nmtk {

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& src_vocab,
                                      const Vocab& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.push_back(EncodedPair{encode_tokens(src_vocab, p.src), encode_tokens(tgt_vocab, p.tgt)});
  return out;
}

namespace {

// Padded column counts as stored: source raw, target wrapped in <sos>/<eos>.
int64_t src_cols_of(const EncodedPair& p) { return static_cast<int64_t>(p.src.size()); }
int64_t tgt_cols_of(const EncodedPair& p) { return static_cast<int64_t>(p.tgt.size()) + 2; }

BatchUnit materialize(const std::vector<const EncodedPair*>& group) {
  int64_t rows = static_cast<int64_t>(group.size());
  int64_t sc = 0, tc = 0;
  for (const auto* p : group) {
    sc = std::max(sc, src_cols_of(*p));
    tc = std::max(tc, tgt_cols_of(*p));
  }
  BatchUnit u{IdMatrix(rows, sc, Vocab::pad_id), IdMatrix(rows, tc, Vocab::pad_id)};
  for (int64_t r = 0; r < rows; ++r) {
    const EncodedPair& p = *group[static_cast<size_t>(r)];
    for (size_t c = 0; c < p.src.size(); ++c) u.src.at(r, static_cast<int64_t>(c)) = p.src[c];
    u.tgt.at(r, 0) = Vocab::sos_id;
    for (size_t c = 0; c < p.tgt.size(); ++c) u.tgt.at(r, static_cast<int64_t>(c) + 1) = p.tgt[c];
    u.tgt.at(r, static_cast<int64_t>(p.tgt.size()) + 1) = Vocab::eos_id;
  }
  return u;
}

}  // namespace

std::vector<BatchUnit> sort_and_batch(const std::vector<EncodedPair>& pairs, int64_t batch_token_budget,
                                      int64_t max_len, std::ostream* warnings) {
  if (batch_token_budget <= 0)
    throw ConfigError("sort_and_batch: token budget must be positive, got " +
                      std::to_string(batch_token_budget));
  struct Key {
    int64_t total, tgt_len, index;
  };
  std::vector<Key> keys;
  for (size_t i = 0; i < pairs.size(); ++i) {
    int64_t sl = static_cast<int64_t>(pairs[i].src.size());
    int64_t tl = static_cast<int64_t>(pairs[i].tgt.size());
    if (sl == 0 || tl == 0) continue;
    if (sl > max_len || tl > max_len) continue;
    keys.push_back(Key{sl + tl, tl, static_cast<int64_t>(i)});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.total != b.total) return a.total < b.total;
    if (a.tgt_len != b.tgt_len) return a.tgt_len < b.tgt_len;
    return a.index < b.index;
  });

  std::vector<BatchUnit> units;
  std::vector<const EncodedPair*> group;
  int64_t max_sc = 0, max_tc = 0;
  auto flush = [&]() {
    if (!group.empty()) {
      units.push_back(materialize(group));
      group.clear();
      max_sc = max_tc = 0;
    }
  };
  for (const Key& k : keys) {
    const EncodedPair& p = pairs[static_cast<size_t>(k.index)];
    int64_t sc = std::max(max_sc, src_cols_of(p));
    int64_t tc = std::max(max_tc, tgt_cols_of(p));
    int64_t rows = static_cast<int64_t>(group.size()) + 1;
    if (!group.empty() && (rows * sc > batch_token_budget || rows * tc > batch_token_budget)) {
      flush();
      sc = src_cols_of(p);
      tc = tgt_cols_of(p);
    }
    if (group.empty() && (sc > batch_token_budget || tc > batch_token_budget) && warnings)
      *warnings << "sort_and_batch: single pair of padded size " << std::max(sc, tc)
                << " exceeds token budget " << batch_token_budget << ", emitting it alone\n";
    group.push_back(&p);
    max_sc = sc;
    max_tc = tc;
    if (max_sc > batch_token_budget || max_tc > batch_token_budget) flush();  // oversize loner
  }
  flush();
  return units;
}

std::vector<int64_t> epoch_order(int64_t epoch, int64_t n_batches, uint64_t seed) {
  if (n_batches < 1) throw ConfigError("epoch_order: need at least one batch");
  std::vector<int64_t> order(static_cast<size_t>(n_batches));
  std::iota(order.begin(), order.end(), int64_t(0));
  if (epoch <= 1) return order;
  RngStream rng(seed, static_cast<uint64_t>(epoch));
  shuffle_in_place(order, rng);
  return order;
}

}  // namespace nmtk
