#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmtk/common.hpp"

namespace nmtk {

// Token <-> index mapping. Indexes 0..3 are reserved for <pad>, <sos>,
// <eos>, <unk>; everything else is assigned by descending frequency with
// lexicographic tie-break.
struct Vocab {
  static constexpr int32_t pad_id = 0;
  static constexpr int32_t sos_id = 1;
  static constexpr int32_t eos_id = 2;
  static constexpr int32_t unk_id = 3;

  std::unordered_map<std::string, int32_t> to_index;
  std::vector<std::string> to_token;
  std::unordered_map<std::string, int64_t> freq;

  int32_t size() const { return static_cast<int32_t>(to_token.size()); }

  int32_t encode(const std::string& tok) const {
    auto it = to_index.find(tok);
    return it == to_index.end() ? unk_id : it->second;
  }

  const std::string& decode(int32_t id) const;
};

using FreqTable = std::unordered_map<std::string, int64_t>;

// Builds a vocabulary from a frequency table. Tokens below min_freq are left
// out and will encode to <unk>.
Vocab vocab_from_freq(const FreqTable& freq, int64_t min_freq);

void count_tokens(const std::vector<std::vector<std::string>>& sentences, FreqTable& into);

// One "token<TAB>index" line per entry, specials first.
void save_vocab(const Vocab& v, const std::string& path);
Vocab load_vocab(const std::string& path);

std::vector<int32_t> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens);
std::vector<std::string> decode_ids(const Vocab& v, const std::vector<int32_t>& ids);

// Indexes that decoding must never produce: <pad> and <sos> always, plus any
// regular entry of the vocabulary that never occurs in the target corpus.
// <eos> and <unk> stay allowed regardless.
std::vector<int32_t> collect_forbidden_indexes(const std::vector<std::vector<std::string>>& tgt_corpus,
                                               const Vocab& vocab);

void save_index_list(const std::vector<int32_t>& ids, const std::string& path);
std::vector<int32_t> load_index_list(const std::string& path);

}  // namespace nmtk
