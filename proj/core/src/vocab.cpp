#include "nmtk/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace nmtk {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> s{"<pad>", "<sos>", "<eos>", "<unk>"};
  return s;
}

}  // namespace

const std::string& Vocab::decode(int32_t id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocab: index " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(size()));
  return to_token[static_cast<size_t>(id)];
}

void count_tokens(const std::vector<std::vector<std::string>>& sentences, FreqTable& into) {
  for (const auto& sent : sentences)
    for (const auto& tok : sent) into[tok]++;
}

Vocab vocab_from_freq(const FreqTable& freq, int64_t min_freq) {
  Vocab v;
  for (const auto& tok : special_tokens()) {
    v.to_index.emplace(tok, v.size());
    v.to_token.push_back(tok);
  }
  std::vector<std::pair<std::string, int64_t>> entries;
  for (const auto& [tok, n] : freq) {
    if (n < min_freq) continue;
    if (v.to_index.count(tok)) continue;  // corpus text colliding with a special keeps the reserved slot
    entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [tok, n] : entries) {
    v.to_index.emplace(tok, v.size());
    v.to_token.push_back(tok);
    v.freq.emplace(tok, n);
  }
  return v;
}

void save_vocab(const Vocab& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("vocab: cannot open " + path + " for writing");
  for (int32_t i = 0; i < v.size(); ++i) out << v.to_token[static_cast<size_t>(i)] << '\t' << i << '\n';
  if (!out) throw FormatError("vocab: write failed on " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("vocab: cannot open " + path);
  Vocab v;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("vocab: " + path + " line " + std::to_string(lineno) + " has no tab separator");
    std::string tok = line.substr(0, tab);
    int32_t idx;
    try {
      idx = static_cast<int32_t>(std::stol(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw FormatError("vocab: " + path + " line " + std::to_string(lineno) + " has a non-numeric index");
    }
    if (idx != v.size())
      throw FormatError("vocab: " + path + " line " + std::to_string(lineno) + " index " + std::to_string(idx) +
                        " out of order, expected " + std::to_string(v.size()));
    v.to_index.emplace(tok, idx);
    v.to_token.push_back(tok);
  }
  if (v.size() < 4) throw FormatError("vocab: " + path + " is missing the reserved specials");
  for (int32_t i = 0; i < 4; ++i)
    if (v.to_token[static_cast<size_t>(i)] != special_tokens()[static_cast<size_t>(i)])
      throw FormatError("vocab: " + path + " index " + std::to_string(i) + " is \"" +
                        v.to_token[static_cast<size_t>(i)] + "\", expected \"" +
                        special_tokens()[static_cast<size_t>(i)] + "\"");
  return v;
}

std::vector<int32_t> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens) {
  std::vector<int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(v.encode(t));
  return ids;
}

std::vector<std::string> decode_ids(const Vocab& v, const std::vector<int32_t>& ids) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int32_t id : ids) toks.push_back(v.decode(id));
  return toks;
}

std::vector<int32_t> collect_forbidden_indexes(const std::vector<std::vector<std::string>>& tgt_corpus,
                                               const Vocab& vocab) {
  std::vector<bool> seen(static_cast<size_t>(vocab.size()), false);
  for (const auto& sent : tgt_corpus)
    for (const auto& tok : sent) seen[static_cast<size_t>(vocab.encode(tok))] = true;
  std::vector<int32_t> out{Vocab::pad_id, Vocab::sos_id};
  for (int32_t i = 4; i < vocab.size(); ++i)
    if (!seen[static_cast<size_t>(i)]) out.push_back(i);
  return out;
}

void save_index_list(const std::vector<int32_t>& ids, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("index list: cannot open " + path + " for writing");
  for (int32_t id : ids) out << id << '\n';
}

std::vector<int32_t> load_index_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("index list: cannot open " + path);
  std::vector<int32_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(static_cast<int32_t>(std::stol(line)));
    } catch (const std::exception&) {
      throw FormatError("index list: non-numeric line in " + path);
    }
  }
  return out;
}

}  // namespace nmtk
