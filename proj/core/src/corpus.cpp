#include "nmtk/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace nmtk {

std::string normalize_ws(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool in_blank = true;  // also drops leading blanks
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r') {
      if (!in_blank) out.push_back(' ');
      in_blank = true;
    } else {
      out.push_back(c);
      in_blank = false;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(normalize_ws(line));
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<SentencePair> read_parallel(const std::string& src_path, const std::string& tgt_path) {
  std::ifstream sf(src_path), tf(tgt_path);
  if (!sf) throw FormatError("corpus: cannot open " + src_path);
  if (!tf) throw FormatError("corpus: cannot open " + tgt_path);
  std::vector<SentencePair> pairs;
  std::string sline, tline;
  while (true) {
    bool got_s = static_cast<bool>(std::getline(sf, sline));
    bool got_t = static_cast<bool>(std::getline(tf, tline));
    if (got_s != got_t)
      throw FormatError("corpus: " + src_path + " and " + tgt_path + " differ in line count");
    if (!got_s) break;
    pairs.push_back(SentencePair{split_tokens(sline), split_tokens(tline)});
  }
  return pairs;
}

std::vector<std::string> merge_subwords(const std::vector<std::string>& tokens, const std::string& marker) {
  std::vector<std::string> out;
  std::string cur;
  bool open = false;
  for (const auto& tok : tokens) {
    bool continues = tok.size() >= marker.size() &&
                     tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0;
    const std::string body = continues ? tok.substr(0, tok.size() - marker.size()) : tok;
    if (open) {
      cur += body;
    } else {
      cur = body;
    }
    if (continues) {
      open = true;
    } else {
      out.push_back(cur);
      cur.clear();
      open = false;
    }
  }
  if (open) out.push_back(cur);  // dangling marker on the last token
  return out;
}

MonoCounts mono_counts(const std::vector<std::string>& tokens, const std::string& marker) {
  MonoCounts c;
  c.nsub = static_cast<int64_t>(tokens.size());
  int64_t group = 0;  // subwords in the current original token
  for (const auto& tok : tokens) {
    bool continues = tok.size() >= marker.size() &&
                     tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0;
    group++;
    if (!continues) {
      c.ntok++;
      if (group > 1) c.nsep++;
      group = 0;
    }
  }
  if (group > 0) {  // dangling marker
    c.ntok++;
    if (group > 1) c.nsep++;
  }
  c.nsubadd = c.nsub - c.ntok;
  return c;
}

MonoRatios mono_ratios(const MonoCounts& c) {
  MonoRatios r;
  r.cratio = c.nsub > 0 ? static_cast<double>(c.nsubadd) / static_cast<double>(c.nsub) : 0.0;
  r.bratio = static_cast<double>(c.nsub) / static_cast<double>(c.ntok);
  r.sratio = static_cast<double>(c.nsep) / static_cast<double>(c.ntok);
  return r;
}

BiRatios bi_ratios(const SentencePair& p, const std::string& marker) {
  double nsubsrc = static_cast<double>(p.src.size());
  double nsubtgt = static_cast<double>(p.tgt.size());
  double nsrc = static_cast<double>(mono_counts(p.src, marker).ntok);
  double ntgt = static_cast<double>(mono_counts(p.tgt, marker).ntok);
  BiRatios r;
  r.uratio = std::max(nsubsrc, nsubtgt) / std::min(nsubsrc, nsubtgt);
  r.oratio = std::max(nsrc, ntgt) / std::min(nsrc, ntgt);
  return r;
}

RatioThresholds estimate_thresholds(const std::vector<SentencePair>& dev, const std::string& marker) {
  RatioThresholds t;
  t.max_uratio = 0.0;
  t.max_oratio = 0.0;
  for (const auto& p : dev) {
    if (p.src.empty() || p.tgt.empty()) continue;
    for (const auto* side : {&p.src, &p.tgt}) {
      MonoRatios r = mono_ratios(mono_counts(*side, marker));
      t.max_cratio = std::max(t.max_cratio, r.cratio);
      t.max_bratio = std::max(t.max_bratio, r.bratio);
      t.max_sratio = std::max(t.max_sratio, r.sratio);
    }
    BiRatios b = bi_ratios(p, marker);
    t.max_uratio = std::max(t.max_uratio, b.uratio);
    t.max_oratio = std::max(t.max_oratio, b.oratio);
  }
  t.max_uratio = std::max(t.max_uratio, 1.0);
  t.max_oratio = std::max(t.max_oratio, 1.0);
  return t;
}

CleanResult max_keeper(const std::vector<SentencePair>& pairs) {
  struct TgtStat {
    int64_t count = 0;
    int64_t first = 0;
    const SentencePair* pair = nullptr;
  };
  std::map<std::string, std::map<std::string, TgtStat>> by_src;
  std::vector<std::string> src_order;
  int64_t idx = 0;
  for (const auto& p : pairs) {
    std::string skey = join_tokens(p.src);
    std::string tkey = join_tokens(p.tgt);
    auto [it, fresh] = by_src.try_emplace(skey);
    if (fresh) src_order.push_back(skey);
    auto [tit, tfresh] = it->second.try_emplace(tkey);
    if (tfresh) {
      tit->second.first = idx;
      tit->second.pair = &p;
    }
    tit->second.count++;
    idx++;
  }
  CleanResult res;
  for (const auto& skey : src_order) {
    const TgtStat* best = nullptr;
    for (const auto& [tkey, stat] : by_src[skey]) {
      if (!best || stat.count > best->count || (stat.count == best->count && stat.first < best->first))
        best = &stat;
    }
    res.kept.push_back(*best->pair);
  }
  res.removed = static_cast<int64_t>(pairs.size() - res.kept.size());
  return res;
}

CleanResult clean_by_vocab(const std::vector<SentencePair>& pairs, double vratio) {
  if (vratio <= 0.0 || vratio >= 1.0)
    throw ConfigError("clean_by_vocab: vratio must be in (0,1), got " + std::to_string(vratio));
  FreqTable freq;
  for (const auto& p : pairs) {
    for (const auto& t : p.src) freq[t]++;
    for (const auto& t : p.tgt) freq[t]++;
  }
  std::vector<std::pair<std::string, int64_t>> types(freq.begin(), freq.end());
  std::sort(types.begin(), types.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  size_t n_rare = static_cast<size_t>(vratio * static_cast<double>(types.size()));
  std::unordered_set<std::string> rare;
  for (size_t i = 0; i < n_rare; ++i) rare.insert(types[i].first);

  auto rare_fraction = [&rare](const std::vector<std::string>& toks) {
    if (toks.empty()) return 0.0;
    int64_t n = 0;
    for (const auto& t : toks)
      if (rare.count(t)) n++;
    return static_cast<double>(n) / static_cast<double>(toks.size());
  };

  CleanResult res;
  double cutoff = 1.0 - vratio;
  for (const auto& p : pairs) {
    if (rare_fraction(p.src) > cutoff || rare_fraction(p.tgt) > cutoff) {
      res.removed++;
    } else {
      res.kept.push_back(p);
    }
  }
  return res;
}

CleanResult clean_by_ratios(const std::vector<SentencePair>& pairs, const RatioThresholds& t,
                            const std::string& marker) {
  CleanResult res;
  const double eps = 1e-9;  // observed-maximum thresholds must keep the pairs that set them
  for (const auto& p : pairs) {
    if (p.src.empty() || p.tgt.empty()) {
      res.removed++;
      continue;
    }
    bool ok = true;
    for (const auto* side : {&p.src, &p.tgt}) {
      MonoRatios r = mono_ratios(mono_counts(*side, marker));
      if (r.cratio > t.max_cratio + eps || r.bratio > t.max_bratio + eps || r.sratio > t.max_sratio + eps) {
        ok = false;
        break;
      }
    }
    if (ok) {
      BiRatios b = bi_ratios(p, marker);
      if (b.uratio > t.max_uratio + eps || b.oratio > t.max_oratio + eps) ok = false;
    }
    if (ok) {
      res.kept.push_back(p);
    } else {
      res.removed++;
    }
  }
  return res;
}

}  // namespace nmtk
