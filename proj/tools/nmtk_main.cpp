#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nmtk/batching.hpp"
#include "nmtk/checkpoint.hpp"
#include "nmtk/corpus.hpp"
#include "nmtk/dataset.hpp"
#include "nmtk/decode.hpp"
#include "nmtk/server.hpp"
#include "nmtk/toolbox.hpp"
#include "nmtk/trainer.hpp"
#include "nmtk/translate.hpp"
#include "nmtk/version.hpp"

namespace fs = std::filesystem;
using namespace nmtk;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::string line;
  if (path.empty() || path == "-") {
    while (std::getline(std::cin, line)) lines.push_back(line);
    return lines;
  }
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  if (path.empty() || path == "-") {
    for (const auto& l : lines) std::cout << l << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw FormatError("write failed on " + path);
}

std::vector<std::vector<std::string>> tokenized_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

void write_pairs(const std::vector<SentencePair>& pairs, const std::string& src_path,
                 const std::string& tgt_path) {
  std::vector<std::string> src, tgt;
  for (const auto& p : pairs) {
    src.push_back(join_tokens(p.src));
    tgt.push_back(join_tokens(p.tgt));
  }
  write_lines(src_path, src);
  write_lines(tgt_path, tgt);
}

// Writes every character to two buffers; lets training log to the console
// and train.log at once.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return c;
    int ra = a_ ? a_->sputc(static_cast<char>(c)) : c;
    int rb = b_ ? b_->sputc(static_cast<char>(c)) : c;
    return ra == EOF || rb == EOF ? EOF : c;
  }
  int sync() override {
    int ra = a_ ? a_->pubsync() : 0;
    int rb = b_ ? b_->pubsync() : 0;
    return ra == 0 && rb == 0 ? 0 : -1;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

struct VocabPathArgs {
  std::string src_vocab;
  std::string tgt_vocab;
  std::string cache_root = "cache";
  std::string data_id;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--src-vocab", src_vocab, "source vocabulary file");
    cmd->add_option("--tgt-vocab", tgt_vocab, "target vocabulary file");
    cmd->add_option("--cache-root", cache_root, "dataset cache root")->capture_default_str();
    cmd->add_option("--dataid", data_id, "dataset id under the cache root");
  }

  void resolve(const ConfigFile& cfg) {
    if (data_id.empty()) data_id = cfg.get_string("data_id", "");
    if (src_vocab.empty() && !data_id.empty()) src_vocab = cache_root + "/" + data_id + "/src.vocab";
    if (tgt_vocab.empty() && !data_id.empty()) tgt_vocab = cache_root + "/" + data_id + "/tgt.vocab";
    if (src_vocab.empty() || tgt_vocab.empty())
      throw ConfigError("need --src-vocab/--tgt-vocab or a data id to locate the vocabularies");
  }
};

ConfigFile load_config_or_empty(const std::string& path) {
  if (path.empty()) return {};
  return ConfigFile::parse_file(path);
}

// ---------------------------------------------------------------------------
// clean
// ---------------------------------------------------------------------------

struct CleanArgs {
  std::string src, tgt, out_src, out_tgt;
  std::string dev_src, dev_tgt;
  std::string marker = "@@";
  double vratio = -1.0;
  double max_cratio = -1.0, max_bratio = -1.0, max_sratio = -1.0;
  double max_uratio = -1.0, max_oratio = -1.0;
};

int run_clean(const CleanArgs& a) {
  std::vector<SentencePair> pairs = read_parallel(a.src, a.tgt);
  std::cout << "input: " << pairs.size() << " pairs\n";

  CleanResult kept = max_keeper(pairs);
  std::cout << "max_keeper: kept " << kept.kept.size() << " removed " << kept.removed << "\n";

  if (a.vratio >= 0.0) {
    kept = clean_by_vocab(kept.kept, a.vratio);
    std::cout << "vocab: kept " << kept.kept.size() << " removed " << kept.removed << "\n";
  }

  bool explicit_thresholds = a.max_cratio >= 0.0 || a.max_bratio >= 0.0 || a.max_sratio >= 0.0 ||
                             a.max_uratio >= 0.0 || a.max_oratio >= 0.0;
  bool have_dev = !a.dev_src.empty() && !a.dev_tgt.empty();
  if (have_dev || explicit_thresholds) {
    RatioThresholds t;
    if (have_dev) {
      t = estimate_thresholds(read_parallel(a.dev_src, a.dev_tgt), a.marker);
    } else {
      // Only the explicitly given ratios should filter anything.
      double inf = std::numeric_limits<double>::infinity();
      t = {inf, inf, inf, inf, inf};
    }
    if (a.max_cratio >= 0.0) t.max_cratio = a.max_cratio;
    if (a.max_bratio >= 0.0) t.max_bratio = a.max_bratio;
    if (a.max_sratio >= 0.0) t.max_sratio = a.max_sratio;
    if (a.max_uratio >= 0.0) t.max_uratio = a.max_uratio;
    if (a.max_oratio >= 0.0) t.max_oratio = a.max_oratio;
    kept = clean_by_ratios(kept.kept, t, a.marker);
    std::cout << "ratios: kept " << kept.kept.size() << " removed " << kept.removed << "\n";
  }

  write_pairs(kept.kept, a.out_src, a.out_tgt);
  return 0;
}

// ---------------------------------------------------------------------------
// mkdata
// ---------------------------------------------------------------------------

struct MkdataArgs {
  std::string src, tgt, dev_src, dev_tgt;
  std::string data_id;
  std::string cache_root = "cache";
  int64_t batch_tokens = 2048;
  int64_t max_len = 256;
  int64_t min_freq = 1;
  bool shared_vocab = false;
};

int run_mkdata(const MkdataArgs& a) {
  std::vector<SentencePair> pairs = read_parallel(a.src, a.tgt);
  std::string out_dir = a.cache_root + "/" + a.data_id;
  fs::create_directories(out_dir);

  FreqTable src_freq, tgt_freq;
  for (const auto& p : pairs) {
    count_tokens({p.src}, src_freq);
    count_tokens({p.tgt}, tgt_freq);
  }
  Vocab src_vocab, tgt_vocab;
  if (a.shared_vocab) {
    FreqTable merged = src_freq;
    for (const auto& [tok, n] : tgt_freq) merged[tok] += n;
    src_vocab = vocab_from_freq(merged, a.min_freq);
    tgt_vocab = src_vocab;
  } else {
    src_vocab = vocab_from_freq(src_freq, a.min_freq);
    tgt_vocab = vocab_from_freq(tgt_freq, a.min_freq);
  }
  save_vocab(src_vocab, out_dir + "/src.vocab");
  save_vocab(tgt_vocab, out_dir + "/tgt.vocab");
  std::cout << "src vocab: " << src_vocab.size() << " entries\n";
  std::cout << "tgt vocab: " << tgt_vocab.size() << " entries\n";

  auto batches = sort_and_batch(encode_pairs(pairs, src_vocab, tgt_vocab), a.batch_tokens, a.max_len,
                                &std::cerr);
  write_dataset(out_dir + "/train.bin", batches, static_cast<uint32_t>(src_vocab.size()),
                static_cast<uint32_t>(tgt_vocab.size()));
  std::cout << "train: " << batches.size() << " batches\n";

  if (!a.dev_src.empty() && !a.dev_tgt.empty()) {
    auto dev_pairs = read_parallel(a.dev_src, a.dev_tgt);
    auto dev_batches = sort_and_batch(encode_pairs(dev_pairs, src_vocab, tgt_vocab), a.batch_tokens,
                                      a.max_len, &std::cerr);
    write_dataset(out_dir + "/dev.bin", dev_batches, static_cast<uint32_t>(src_vocab.size()),
                  static_cast<uint32_t>(tgt_vocab.size()));
    std::cout << "dev: " << dev_batches.size() << " batches\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data_id, run_id;
  std::string cache_root = "cache";
  std::string expm_root = "expm";
  std::string resume;
};

int run_train(const TrainArgs& a) {
  ConfigFile cfg = ConfigFile::parse_file(a.config);
  std::string data_id = a.data_id.empty() ? cfg.get_string("data_id", "") : a.data_id;
  std::string run_id = a.run_id.empty() ? cfg.get_string("run_id", "run1") : a.run_id;
  if (data_id.empty()) throw ConfigError("train: set data_id in the config or pass --dataid");

  std::string data_dir = a.cache_root + "/" + data_id;
  DatasetReader train_data(data_dir + "/train.bin");
  std::unique_ptr<DatasetReader> dev_data;
  if (fs::exists(data_dir + "/dev.bin")) dev_data = std::make_unique<DatasetReader>(data_dir + "/dev.bin");

  ModelConfig mcfg = cfg.model_config();
  mcfg.src_vocab = static_cast<int64_t>(train_data.header().src_vocab);
  mcfg.tgt_vocab = static_cast<int64_t>(train_data.header().tgt_vocab);
  TrainConfig tcfg = cfg.train_config();

  std::string out_dir = a.expm_root + "/" + data_id + "/" + run_id;
  fs::create_directories(out_dir);
  std::ofstream log_file(out_dir + "/train.log", std::ios::app);
  TeeBuf tee(std::cout.rdbuf(), log_file.rdbuf());
  std::ostream log(&tee);

  NMTModel<float> model(mcfg, tcfg.seed);
  TrainOutcome out = train_loop(model, train_data, dev_data.get(), tcfg, out_dir, &log, a.resume);
  log << "best model: " << out.best_path << "\n" << std::flush;
  return 0;
}

// ---------------------------------------------------------------------------
// translate / serve
// ---------------------------------------------------------------------------

struct TranslateArgs {
  std::string config;
  std::vector<std::string> models;
  VocabPathArgs vocabs;
  int64_t beam = -1;
  double alpha = -1.0;
  int64_t max_len = -1;
  std::string forbidden_file;
  std::string input, output;
};

PipelineOptions pipeline_options(const TranslateArgs& a) {
  ConfigFile cfg = load_config_or_empty(a.config);
  PipelineOptions opt;
  opt.model = cfg.model_config();
  opt.model.src_vocab = 0;  // vocabulary files decide
  opt.model.tgt_vocab = 0;
  opt.model_paths = a.models;
  DecodeConfig dcfg = cfg.decode_config();
  opt.beam_size = a.beam >= 0 ? a.beam : dcfg.beam_size;
  opt.alpha = a.alpha >= 0.0 ? a.alpha : dcfg.length_penalty;
  opt.max_len = a.max_len >= 0 ? a.max_len : dcfg.max_len;
  TrainConfig tcfg = cfg.train_config();
  opt.forbidden = tcfg.forbidden_indexes;
  if (!a.forbidden_file.empty()) {
    for (int32_t id : load_index_list(a.forbidden_file)) opt.forbidden.push_back(id);
  }
  VocabPathArgs vp = a.vocabs;
  vp.resolve(cfg);
  opt.src_vocab_path = vp.src_vocab;
  opt.tgt_vocab_path = vp.tgt_vocab;
  return opt;
}

int run_translate(const TranslateArgs& a) {
  TranslationPipeline pipe(pipeline_options(a));
  std::vector<std::string> lines = read_lines(a.input);
  std::vector<std::string> out;
  out.reserve(lines.size());
  // Work in slices so arbitrarily large inputs stream through; sliced and
  // whole-batch decoding give identical text.
  const size_t slice = 32;
  for (size_t at = 0; at < lines.size(); at += slice) {
    size_t end = std::min(lines.size(), at + slice);
    auto part = pipe.translate({lines.begin() + static_cast<long>(at), lines.begin() + static_cast<long>(end)});
    out.insert(out.end(), part.begin(), part.end());
  }
  write_lines(a.output, out);
  return 0;
}

struct ServeArgs {
  TranslateArgs common;
  std::string addr = "127.0.0.1";
  int port = 8080;
  int64_t max_batch = 64;
};

int run_serve(const ServeArgs& a) {
  auto pipe = std::make_shared<const TranslationPipeline>(pipeline_options(a.common));
  ServerOptions sopt;
  sopt.addr = a.addr;
  sopt.port = a.port;
  sopt.max_batch = a.max_batch;
  TranslateServer server(pipe, sopt);
  if (!server.bind()) throw ConfigError("serve: cannot bind " + a.addr + ":" + std::to_string(a.port));
  std::cout << "serving " << pipe->model_name() << " on " << a.addr << ":" << server.bound_port()
            << std::endl;
  server.serve_bound();
  return 0;
}

// ---------------------------------------------------------------------------
// avg / rank / forbidden
// ---------------------------------------------------------------------------

int run_avg(const std::vector<std::string>& inputs, const std::string& out) {
  save_checkpoint(out, average_checkpoints(inputs));
  std::cout << "averaged " << inputs.size() << " checkpoints into " << out << "\n";
  return 0;
}

struct RankArgs {
  std::string config;
  std::string model;
  VocabPathArgs vocabs;
  std::string src, tgt, out;
};

int run_rank(const RankArgs& a) {
  ConfigFile cfg = load_config_or_empty(a.config);
  VocabPathArgs vp = a.vocabs;
  vp.resolve(cfg);
  Vocab src_vocab = load_vocab(vp.src_vocab);
  Vocab tgt_vocab = load_vocab(vp.tgt_vocab);

  ModelConfig mcfg = cfg.model_config();
  mcfg.src_vocab = src_vocab.size();
  mcfg.tgt_vocab = tgt_vocab.size();
  NMTModel<float> model(mcfg, 0);
  ParamList<float> params = model.named_params();
  load_params_into(load_checkpoint(a.model), params);

  auto pairs = encode_pairs(read_parallel(a.src, a.tgt), src_vocab, tgt_vocab);
  TrainConfig tcfg = cfg.train_config();
  SmoothingSpec spec;
  spec.smoothing = tcfg.label_smoothing;
  spec.forbidden = tcfg.forbidden_indexes;
  std::sort(spec.forbidden.begin(), spec.forbidden.end());

  auto ranked = rank_corpus(model, pairs, spec);
  std::vector<std::string> lines;
  for (const auto& r : ranked) {
    std::ostringstream os;
    os << r.index << '\t' << std::setprecision(17) << r.loss;
    lines.push_back(os.str());
  }
  write_lines(a.out, lines);
  return 0;
}

int run_forbidden(const std::string& tgt, const std::string& vocab_path, const std::string& out) {
  Vocab v = load_vocab(vocab_path);
  save_index_list(collect_forbidden_indexes(tokenized_lines(tgt), v), out);
  std::cout << "forbidden indexes written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nmtk: a small neural machine translation toolkit"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  CleanArgs clean_args;
  auto* clean = app.add_subcommand("clean", "deduplicate and filter a parallel corpus");
  clean->add_option("--src", clean_args.src, "source corpus")->required();
  clean->add_option("--tgt", clean_args.tgt, "target corpus")->required();
  clean->add_option("--out-src", clean_args.out_src, "cleaned source output")->required();
  clean->add_option("--out-tgt", clean_args.out_tgt, "cleaned target output")->required();
  clean->add_option("--vratio", clean_args.vratio, "rare-vocabulary removal ratio");
  clean->add_option("--dev-src", clean_args.dev_src, "dev source for threshold estimation");
  clean->add_option("--dev-tgt", clean_args.dev_tgt, "dev target for threshold estimation");
  clean->add_option("--marker", clean_args.marker, "subword continuation marker")->capture_default_str();
  clean->add_option("--max-cratio", clean_args.max_cratio, "max subword-growth ratio");
  clean->add_option("--max-bratio", clean_args.max_bratio, "max subword/token ratio");
  clean->add_option("--max-sratio", clean_args.max_sratio, "max split-token ratio");
  clean->add_option("--max-uratio", clean_args.max_uratio, "max cross-side subword ratio");
  clean->add_option("--max-oratio", clean_args.max_oratio, "max cross-side token ratio");

  MkdataArgs mkdata_args;
  auto* mkdata = app.add_subcommand("mkdata", "build vocabularies and a batched binary dataset");
  mkdata->add_option("--src", mkdata_args.src, "source corpus")->required();
  mkdata->add_option("--tgt", mkdata_args.tgt, "target corpus")->required();
  mkdata->add_option("--dev-src", mkdata_args.dev_src, "dev source corpus");
  mkdata->add_option("--dev-tgt", mkdata_args.dev_tgt, "dev target corpus");
  mkdata->add_option("--dataid", mkdata_args.data_id, "dataset id")->required();
  mkdata->add_option("--cache-root", mkdata_args.cache_root, "cache root")->capture_default_str();
  mkdata->add_option("--batch-tokens", mkdata_args.batch_tokens, "token budget per batch")
      ->capture_default_str();
  mkdata->add_option("--max-len", mkdata_args.max_len, "drop pairs longer than this")
      ->capture_default_str();
  mkdata->add_option("--min-freq", mkdata_args.min_freq, "minimum token frequency")
      ->capture_default_str();
  mkdata->add_flag("--shared-vocab", mkdata_args.shared_vocab, "one vocabulary for both sides");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model from a configuration file");
  train->add_option("--config", train_args.config, "configuration file")->required();
  train->add_option("--dataid", train_args.data_id, "dataset id (overrides config)");
  train->add_option("--runid", train_args.run_id, "run id (overrides config)");
  train->add_option("--cache-root", train_args.cache_root, "cache root")->capture_default_str();
  train->add_option("--expm-root", train_args.expm_root, "experiment root")->capture_default_str();
  train->add_option("--resume", train_args.resume, "checkpoint to resume from");

  TranslateArgs tr_args;
  auto* translate = app.add_subcommand("translate", "translate text with a model or ensemble");
  translate->add_option("--config", tr_args.config, "configuration file");
  translate->add_option("--model", tr_args.models, "model checkpoint (repeat for an ensemble)")
      ->required();
  tr_args.vocabs.add_to(translate);
  translate->add_option("--beam", tr_args.beam, "beam size");
  translate->add_option("--alpha", tr_args.alpha, "length penalty strength");
  translate->add_option("--max-len", tr_args.max_len, "maximum output length");
  translate->add_option("--forbidden-file", tr_args.forbidden_file, "extra forbidden index list");
  translate->add_option("--input", tr_args.input, "input file (default stdin)");
  translate->add_option("--output", tr_args.output, "output file (default stdout)");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "run the REST translation server");
  serve->add_option("--config", serve_args.common.config, "configuration file");
  serve->add_option("--model", serve_args.common.models, "model checkpoint (repeatable)")->required();
  serve_args.common.vocabs.add_to(serve);
  serve->add_option("--beam", serve_args.common.beam, "default beam size");
  serve->add_option("--alpha", serve_args.common.alpha, "default length penalty");
  serve->add_option("--max-len", serve_args.common.max_len, "maximum output length");
  serve->add_option("--forbidden-file", serve_args.common.forbidden_file, "extra forbidden index list");
  serve->add_option("--addr", serve_args.addr, "bind address")->capture_default_str();
  serve->add_option("--port", serve_args.port, "bind port")->capture_default_str();
  serve->add_option("--max-batch", serve_args.max_batch, "request sentence cap")->capture_default_str();

  std::vector<std::string> avg_inputs;
  std::string avg_out;
  auto* avg = app.add_subcommand("avg", "average checkpoints elementwise");
  avg->add_option("--out", avg_out, "output checkpoint")->required();
  avg->add_option("checkpoints", avg_inputs, "input checkpoints")->required()->expected(-1);

  RankArgs rank_args;
  auto* rank = app.add_subcommand("rank", "score a parallel corpus by per-token loss");
  rank->add_option("--config", rank_args.config, "configuration file");
  rank->add_option("--model", rank_args.model, "model checkpoint")->required();
  rank_args.vocabs.add_to(rank);
  rank->add_option("--src", rank_args.src, "source corpus")->required();
  rank->add_option("--tgt", rank_args.tgt, "target corpus")->required();
  rank->add_option("--out", rank_args.out, "output file (index<TAB>loss per line)")->required();

  std::string forb_tgt, forb_vocab, forb_out;
  auto* forbidden = app.add_subcommand("forbidden", "collect target indexes decoding must avoid");
  forbidden->add_option("--tgt", forb_tgt, "target corpus")->required();
  forbidden->add_option("--vocab", forb_vocab, "target vocabulary")->required();
  forbidden->add_option("--out", forb_out, "output index list")->required();

  try {
    app.parse(argc, argv);
    if (*clean) return run_clean(clean_args);
    if (*mkdata) return run_mkdata(mkdata_args);
    if (*train) return run_train(train_args);
    if (*translate) return run_translate(tr_args);
    if (*serve) return run_serve(serve_args);
    if (*avg) return run_avg(avg_inputs, avg_out);
    if (*rank) return run_rank(rank_args);
    if (*forbidden) return run_forbidden(forb_tgt, forb_vocab, forb_out);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
