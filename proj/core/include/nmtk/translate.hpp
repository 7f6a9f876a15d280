#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nmtk/config.hpp"
#include "nmtk/model.hpp"
#include "nmtk/vocab.hpp"

namespace nmtk {

struct PipelineOptions {
  ModelConfig model;                     // vocab sizes may be zero; the vocab files fill them in
  std::vector<std::string> model_paths;  // more than one activates the ensemble
  std::string src_vocab_path;
  std::string tgt_vocab_path;
  int64_t beam_size = 4;
  double alpha = 0.0;
  int64_t max_len = 256;
  std::vector<int32_t> forbidden{0, 1};
};

// Text in, text out: tokenize, encode, decode with the configured model or
// ensemble, detokenize. The CLI and the server share this path, so their
// outputs are identical byte for byte.
class TranslationPipeline {
 public:
  explicit TranslationPipeline(const PipelineOptions& opt);

  std::vector<std::string> translate(const std::vector<std::string>& lines) const {
    return translate(lines, opt_.beam_size, opt_.alpha);
  }
  std::vector<std::string> translate(const std::vector<std::string>& lines, int64_t beam_size,
                                     double alpha) const;

  const PipelineOptions& options() const { return opt_; }
  const Vocab& src_vocab() const { return src_; }
  const Vocab& tgt_vocab() const { return tgt_; }
  std::string model_name() const;  // file name of the first model
  int64_t model_count() const { return static_cast<int64_t>(models_.size()); }

 private:
  PipelineOptions opt_;
  Vocab src_;
  Vocab tgt_;
  // Positional caches are pre-warmed to max_len at load; after that the
  // models are only read, so concurrent translate() calls are safe.
  mutable std::vector<std::unique_ptr<NMTModel<float>>> models_;
};

}  // namespace nmtk
