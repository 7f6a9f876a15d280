#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nmtk/common.hpp"
#include "nmtk/corpus.hpp"
#include "nmtk/vocab.hpp"

namespace nmtk {

// Id sequences without specials; <sos>/<eos> are added when a BatchUnit is
// materialized.
struct EncodedPair {
  std::vector<int32_t> src;
  std::vector<int32_t> tgt;
};

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& src_vocab,
                                      const Vocab& tgt_vocab);

// One padded training unit. src holds raw ids; every tgt row is
// <sos> tokens <eos> then pad.
struct BatchUnit {
  IdMatrix src;
  IdMatrix tgt;
};

// Sorts by (total tokens, target length, input order), then packs greedily so
// that rows x padded_cols stays within the token budget independently on each
// side. Pairs longer than max_len on either side are dropped; a single pair
// whose own padded area exceeds the budget is emitted alone with a warning.
std::vector<BatchUnit> sort_and_batch(const std::vector<EncodedPair>& pairs, int64_t batch_token_budget,
                                      int64_t max_len, std::ostream* warnings = nullptr);

// Epoch 1 keeps the short-to-long curriculum order; later epochs shuffle
// deterministically from (seed, epoch).
std::vector<int64_t> epoch_order(int64_t epoch, int64_t n_batches, uint64_t seed);

}  // namespace nmtk
