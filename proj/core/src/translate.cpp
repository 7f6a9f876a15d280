#include "nmtk/translate.hpp"

#include <algorithm>
#include <filesystem>

#include "nmtk/checkpoint.hpp"
#include "nmtk/corpus.hpp"
#include "nmtk/decode.hpp"

namespace nmtk {

TranslationPipeline::TranslationPipeline(const PipelineOptions& opt) : opt_(opt) {
  if (opt_.model_paths.empty()) throw ConfigError("translate: no model files given");
  if (opt_.beam_size < 1) throw ConfigError("translate: beam size must be at least 1");
  if (opt_.max_len < 1) throw ConfigError("translate: max_len must be at least 1");
  src_ = load_vocab(opt_.src_vocab_path);
  tgt_ = load_vocab(opt_.tgt_vocab_path);
  if (opt_.model.src_vocab == 0) opt_.model.src_vocab = src_.size();
  if (opt_.model.tgt_vocab == 0) opt_.model.tgt_vocab = tgt_.size();
  if (opt_.model.src_vocab != src_.size() || opt_.model.tgt_vocab != tgt_.size())
    throw ConfigError("translate: model is configured for vocabularies " +
                      std::to_string(opt_.model.src_vocab) + "/" + std::to_string(opt_.model.tgt_vocab) +
                      " but the vocab files hold " + std::to_string(src_.size()) + "/" +
                      std::to_string(tgt_.size()) + " entries");
  std::sort(opt_.forbidden.begin(), opt_.forbidden.end());
  opt_.forbidden.erase(std::unique(opt_.forbidden.begin(), opt_.forbidden.end()), opt_.forbidden.end());

  for (const auto& path : opt_.model_paths) {
    auto model = std::make_unique<NMTModel<float>>(opt_.model, 0);
    ParamList<float> params = model->named_params();
    load_params_into(load_checkpoint(path), params);
    model->warm_positions(opt_.max_len + 2);
    models_.push_back(std::move(model));
  }
}

std::string TranslationPipeline::model_name() const {
  return std::filesystem::path(opt_.model_paths.front()).filename().string();
}

std::vector<std::string> TranslationPipeline::translate(const std::vector<std::string>& lines,
                                                        int64_t beam_size, double alpha) const {
  if (lines.empty()) return {};
  if (beam_size < 1) throw ConfigError("translate: beam size must be at least 1");

  std::vector<std::vector<int32_t>> ids;
  int64_t width = 1;
  for (const auto& line : lines) {
    // Source rows carry raw ids, exactly like the training batches; an empty
    // line becomes a lone <unk> so the encoder always sees one real token.
    std::vector<int32_t> row = encode_tokens(src_, split_tokens(line));
    if (row.empty()) row.push_back(Vocab::unk_id);
    width = std::max<int64_t>(width, static_cast<int64_t>(row.size()));
    ids.push_back(std::move(row));
  }
  IdMatrix src(static_cast<int64_t>(ids.size()), width, Vocab::pad_id);
  for (size_t r = 0; r < ids.size(); ++r)
    for (size_t c = 0; c < ids[r].size(); ++c)
      src.at(static_cast<int64_t>(r), static_cast<int64_t>(c)) = ids[r][c];

  std::vector<ScoredSequence> best;
  NoGradGuard<float> ng;
  if (models_.size() == 1 && beam_size == 1) {
    best = greedy_decode(*models_[0], src, opt_.max_len, opt_.forbidden);
  } else {
    DecodeConfig dcfg;
    dcfg.beam_size = beam_size;
    dcfg.length_penalty = alpha;
    dcfg.max_len = opt_.max_len;
    std::vector<std::vector<ScoredSequence>> pools;
    if (models_.size() == 1) {
      pools = beam_decode(*models_[0], src, dcfg, opt_.forbidden);
    } else {
      std::vector<NMTModel<float>*> ptrs;
      for (auto& m : models_) ptrs.push_back(m.get());
      pools = ensemble_decode(std::move(ptrs), src, dcfg, opt_.forbidden);
    }
    for (auto& pool : pools) best.push_back(pool.front());
  }

  std::vector<std::string> out;
  out.reserve(best.size());
  for (const auto& seq : best) out.push_back(join_tokens(decode_ids(tgt_, seq.tokens)));
  return out;
}

}  // namespace nmtk
