#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmtk/common.hpp"

namespace nmtk {

enum class Variant { standard, avg_attn, transparent, hierarchical, rnmt_dec };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct ModelConfig {
  int64_t isize = 512;
  int64_t nlayer = 6;
  int64_t ff_hsize = 2048;
  int64_t nhead = 8;
  int64_t attn_hsize = 0;  // 0 means follow isize
  int64_t cache_len = 512;
  double drop = 0.1;
  double attn_drop = 0.1;
  double noise_scale = 0.0;  // optional embedding-output noise, off by default
  bool bindDecoderEmb = true;
  bool share_emb = false;
  bool norm_output = true;
  Variant variant = Variant::standard;
  int64_t src_vocab = 0;
  int64_t tgt_vocab = 0;

  int64_t attn_dim() const { return attn_hsize > 0 ? attn_hsize : isize; }
  int64_t head_dim() const { return attn_dim() / nhead; }

  void validate() const;
};

struct TrainConfig {
  double label_smoothing = 0.1;
  std::vector<int32_t> forbidden_indexes{0, 1};
  int64_t tokens_optm = 25000;
  int64_t warm_step = 8000;
  bool use_ams = false;
  double weight_decay = 0.0;
  int64_t maxrun = 8;
  int64_t training_steps = 0;  // 0 disables the step cap
  int64_t earlystop = 8;
  int64_t save_every = 1500;
  int64_t num_checkpoint = 4;
  int64_t epoch_start_checkpoint_save = 1;
  bool epoch_save = false;
  int64_t batch_report = 2000;
  bool report_eva = true;
  double dss_ws = 0.0;
  double dss_rm = 0.0;
  uint64_t seed = 1;

  void validate() const;
};

struct DecodeConfig {
  int64_t beam_size = 4;
  double length_penalty = 0.0;
  int64_t max_len = 256;

  void validate() const;
};

// Flat "key = value" file; '#' starts a comment; keys mirror the training
// configuration names. Unknown keys are rejected so typos surface early.
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int32_t> get_int_list(const std::string& key, std::vector<int32_t> fallback) const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  DecodeConfig decode_config() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace nmtk
