#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmtk/vocab.hpp"

namespace nmtk {

// A parallel sentence pair as subword token sequences (whitespace-split,
// already segmented by an external BPE tool).
struct SentencePair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
};

std::string normalize_ws(const std::string& line);
std::vector<std::string> split_tokens(const std::string& line);
std::string join_tokens(const std::vector<std::string>& tokens);

// Aligned line-by-line files; mismatched line counts are a format error.
std::vector<SentencePair> read_parallel(const std::string& src_path, const std::string& tgt_path);

// Undoes subword segmentation for counting: a token ending in `marker`
// continues into the next token.
std::vector<std::string> merge_subwords(const std::vector<std::string>& tokens, const std::string& marker);

struct MonoCounts {
  int64_t ntok = 0;     // tokens before segmentation
  int64_t nsub = 0;     // tokens after segmentation
  int64_t nsubadd = 0;  // nsub - ntok
  int64_t nsep = 0;     // original tokens that were split
};

MonoCounts mono_counts(const std::vector<std::string>& tokens, const std::string& marker);

struct MonoRatios {
  double cratio = 0.0;  // nsubadd / nsub
  double bratio = 0.0;  // nsub / ntok
  double sratio = 0.0;  // nsep / ntok
};

// Requires ntok > 0; callers skip (and count as removed) empty sides.
MonoRatios mono_ratios(const MonoCounts& c);

struct BiRatios {
  double uratio = 0.0;  // max/min of subword counts across sides
  double oratio = 0.0;  // max/min of original token counts across sides
};

BiRatios bi_ratios(const SentencePair& p, const std::string& marker);

struct RatioThresholds {
  double max_cratio = 0.0;
  double max_bratio = 0.0;
  double max_sratio = 0.0;
  double max_uratio = 1.0;
  double max_oratio = 1.0;
};

// Maxima of each ratio over the dev set, both sides for the per-side ratios.
RatioThresholds estimate_thresholds(const std::vector<SentencePair>& dev, const std::string& marker);

struct CleanResult {
  std::vector<SentencePair> kept;
  int64_t removed = 0;
};

// Whitespace normalization plus source-keyed deduplication: for each distinct
// source sentence only its most frequent translation survives, ties broken by
// first occurrence. Output order follows first occurrence of each source.
CleanResult max_keeper(const std::vector<SentencePair>& pairs);

// Drops pairs dominated by rare vocabulary: the vratio fraction of types with
// least frequency (over both sides of the corpus) are rare, and a pair dies
// when either side's rare-token fraction exceeds 1 - vratio.
CleanResult clean_by_vocab(const std::vector<SentencePair>& pairs, double vratio);

// Keeps a pair only if every ratio is within thresholds on every applicable
// side; empty sides count as removed.
CleanResult clean_by_ratios(const std::vector<SentencePair>& pairs, const RatioThresholds& t,
                            const std::string& marker);

}  // namespace nmtk
