#include "nmtk/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace nmtk {

Variant variant_from_string(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "avg_attn") return Variant::avg_attn;
  if (s == "transparent") return Variant::transparent;
  if (s == "hierarchical") return Variant::hierarchical;
  if (s == "rnmt_dec") return Variant::rnmt_dec;
  throw ConfigError("unknown model variant \"" + s +
                    "\" (expected standard, avg_attn, transparent, hierarchical or rnmt_dec)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::avg_attn: return "avg_attn";
    case Variant::transparent: return "transparent";
    case Variant::hierarchical: return "hierarchical";
    case Variant::rnmt_dec: return "rnmt_dec";
  }
  return "standard";
}

void ModelConfig::validate() const {
  if (isize <= 0 || nlayer <= 0 || ff_hsize <= 0 || nhead <= 0)
    throw ConfigError("model: isize, nlayer, ff_hsize and nhead must be positive");
  if (attn_dim() % nhead != 0)
    throw ConfigError("model: attention size " + std::to_string(attn_dim()) + " is not divisible by nhead " +
                      std::to_string(nhead));
  if (drop < 0.0 || drop >= 1.0 || attn_drop < 0.0 || attn_drop >= 1.0)
    throw ConfigError("model: dropout probabilities must be in [0,1)");
  if (share_emb && src_vocab != tgt_vocab)
    throw ConfigError("model: share_emb requires a shared vocabulary (source and target sizes differ: " +
                      std::to_string(src_vocab) + " vs " + std::to_string(tgt_vocab) + ")");
  if (variant == Variant::hierarchical) {
    if (norm_output)
      throw ConfigError("model: hierarchical aggregation requires norm_output = False");
    if (nlayer < 2 || nlayer % 2 != 0)
      throw ConfigError("model: hierarchical aggregation needs an even nlayer >= 2, got " +
                        std::to_string(nlayer));
  }
  if (src_vocab < 4 || tgt_vocab < 4)
    throw ConfigError("model: vocabulary sizes must include the 4 specials");
}

void TrainConfig::validate() const {
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("train: label_smoothing must be in [0,1), got " + std::to_string(label_smoothing));
  if (tokens_optm <= 0) throw ConfigError("train: tokens_optm must be positive");
  if (dss_ws < 0.0 || dss_ws > 1.0 || dss_rm < 0.0 || dss_rm > 1.0)
    throw ConfigError("train: dss_ws and dss_rm must be in [0,1]");
  if (maxrun <= 0 && training_steps <= 0)
    throw ConfigError("train: need a positive maxrun or training_steps");
  if (earlystop < 0 || save_every < 0 || num_checkpoint < 0)
    throw ConfigError("train: earlystop, save_every and num_checkpoint must be nonnegative");
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ConfigError("decode: beam_size must be at least 1");
  if (length_penalty < 0.0) throw ConfigError("decode: length_penalty must be nonnegative");
  if (max_len < 1) throw ConfigError("decode: max_len must be at least 1");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      // model
      "isize", "nlayer", "ff_hsize", "nhead", "attn_hsize", "cache_len", "drop", "attn_drop",
      "noise_scale", "bindDecoderEmb", "share_emb", "norm_output", "variant",
      // training
      "label_smoothing", "forbidden_indexes", "tokens_optm", "warm_step", "use_ams", "weight_decay",
      "maxrun", "training_steps", "earlystop", "save_every", "num_checkpoint",
      "epoch_start_checkpoint_save", "epoch_save", "batch_report", "report_eva", "dss_ws", "dss_rm",
      "seed",
      // decoding
      "beam_size", "length_penalty", "max_len",
      // experiment layout
      "data_id", "run_id",
  };
  return keys;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + origin + " line " + std::to_string(lineno) + " is not \"key = value\"");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: " + origin + " line " + std::to_string(lineno) + " has an empty key");
    if (!known_keys().count(key))
      throw ConfigError("config: " + origin + " line " + std::to_string(lineno) + " has unknown key \"" + key +
                        "\"");
    cfg.kv_[key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int64_t ConfigFile::get_int(const std::string& key, int64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key \"" + key + "\" expects an integer, got \"" + it->second + "\"");
  }
}

double ConfigFile::get_real(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key \"" + key + "\" expects a number, got \"" + it->second + "\"");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key \"" + key + "\" expects a boolean, got \"" + it->second + "\"");
}

std::vector<int32_t> ConfigFile::get_int_list(const std::string& key, std::vector<int32_t> fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<int32_t> out;
  std::string body = it->second;
  // tolerate bracketed python-style lists
  std::erase_if(body, [](char c) { return c == '[' || c == ']' || c == ' '; });
  if (body.empty()) return out;
  std::istringstream is(body);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(static_cast<int32_t>(std::stol(item)));
    } catch (const std::exception&) {
      throw ConfigError("config: key \"" + key + "\" expects integers, got \"" + item + "\"");
    }
  }
  return out;
}

ModelConfig ConfigFile::model_config() const {
  ModelConfig m;
  m.isize = get_int("isize", m.isize);
  m.nlayer = get_int("nlayer", m.nlayer);
  m.ff_hsize = get_int("ff_hsize", m.ff_hsize);
  m.nhead = get_int("nhead", m.nhead);
  m.attn_hsize = get_int("attn_hsize", m.attn_hsize);
  m.cache_len = get_int("cache_len", m.cache_len);
  m.drop = get_real("drop", m.drop);
  m.attn_drop = get_real("attn_drop", m.attn_drop);
  m.noise_scale = get_real("noise_scale", m.noise_scale);
  m.bindDecoderEmb = get_bool("bindDecoderEmb", m.bindDecoderEmb);
  m.share_emb = get_bool("share_emb", m.share_emb);
  m.norm_output = get_bool("norm_output", m.norm_output);
  m.variant = variant_from_string(get_string("variant", variant_to_string(m.variant)));
  return m;
}

TrainConfig ConfigFile::train_config() const {
  TrainConfig t;
  t.label_smoothing = get_real("label_smoothing", t.label_smoothing);
  t.forbidden_indexes = get_int_list("forbidden_indexes", t.forbidden_indexes);
  t.tokens_optm = get_int("tokens_optm", t.tokens_optm);
  t.warm_step = get_int("warm_step", t.warm_step);
  t.use_ams = get_bool("use_ams", t.use_ams);
  t.weight_decay = get_real("weight_decay", t.weight_decay);
  t.maxrun = get_int("maxrun", t.maxrun);
  t.training_steps = get_int("training_steps", t.training_steps);
  t.earlystop = get_int("earlystop", t.earlystop);
  t.save_every = get_int("save_every", t.save_every);
  t.num_checkpoint = get_int("num_checkpoint", t.num_checkpoint);
  t.epoch_start_checkpoint_save = get_int("epoch_start_checkpoint_save", t.epoch_start_checkpoint_save);
  t.epoch_save = get_bool("epoch_save", t.epoch_save);
  t.batch_report = get_int("batch_report", t.batch_report);
  t.report_eva = get_bool("report_eva", t.report_eva);
  t.dss_ws = get_real("dss_ws", t.dss_ws);
  t.dss_rm = get_real("dss_rm", t.dss_rm);
  t.seed = static_cast<uint64_t>(get_int("seed", static_cast<int64_t>(t.seed)));
  return t;
}

DecodeConfig ConfigFile::decode_config() const {
  DecodeConfig d;
  d.beam_size = get_int("beam_size", d.beam_size);
  d.length_penalty = get_real("length_penalty", d.length_penalty);
  d.max_len = get_int("max_len", d.max_len);
  return d;
}

}  // namespace nmtk
