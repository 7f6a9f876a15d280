#include "nmtk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace nmtk {
namespace {

// Stream ids for the per-epoch shuffle are the epoch numbers themselves, so
// the sampler draws from a range far above any realistic epoch count.
constexpr uint64_t kSampleStreamBase = 1000000;

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n';
}

std::string fmt_real(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

SmoothingSpec spec_of(const TrainConfig& cfg) {
  SmoothingSpec spec;
  spec.smoothing = cfg.label_smoothing;
  spec.forbidden = cfg.forbidden_indexes;
  std::sort(spec.forbidden.begin(), spec.forbidden.end());
  return spec;
}

CheckpointData snapshot(const ParamList<float>& params, const AdamState<float>* opt,
                        const TrainState* train) {
  CheckpointData d;
  d.params = params;
  if (opt) {
    d.has_optimizer = true;
    d.optimizer = *opt;
  }
  if (train) {
    d.has_train_state = true;
    d.train = *train;
  }
  return d;
}

// Rolling checkpoints already on disk, ordered oldest first, so retention
// keeps working after a resume.
std::vector<std::string> existing_rolling(const std::string& out_dir) {
  std::vector<std::pair<int64_t, std::string>> found;
  if (fs::exists(out_dir)) {
    for (const auto& entry : fs::directory_iterator(out_dir)) {
      std::string name = entry.path().filename().string();
      if (name.rfind("checkpoint_", 0) != 0 || name.size() < 16) continue;
      if (name.substr(name.size() - 5) != ".ntck") continue;
      std::string digits = name.substr(11, name.size() - 16);
      if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
      found.emplace_back(std::stoll(digits), entry.path().string());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> paths;
  for (auto& [step, path] : found) paths.push_back(path);
  return paths;
}

std::vector<int64_t> schedule_for_epoch(const TrainState& st, const TrainConfig& cfg, int64_t n_units) {
  return dynamic_sample(st.prev_unit_losses, cfg.dss_ws, cfg.dss_rm, n_units, st.seed, st.epoch);
}

}  // namespace

TeacherViews teacher_forcing_views(const IdMatrix& tgt) {
  if (tgt.cols < 2)
    throw std::invalid_argument("teacher forcing: target block needs <sos> and <eos> columns, got " +
                                std::to_string(tgt.cols));
  TeacherViews out;
  out.tgt_in = IdMatrix(tgt.rows, tgt.cols - 1);
  out.tgt_out = IdMatrix(tgt.rows, tgt.cols - 1);
  for (int64_t r = 0; r < tgt.rows; ++r)
    for (int64_t c = 0; c + 1 < tgt.cols; ++c) {
      out.tgt_in.at(r, c) = tgt.at(r, c);
      out.tgt_out.at(r, c) = tgt.at(r, c + 1);
    }
  return out;
}

UnitResult train_unit(NMTModel<float>& model, const BatchUnit& unit, const SmoothingSpec& spec,
                      const RunCtx& ctx) {
  TeacherViews views = teacher_forcing_views(unit.tgt);
  EncoderOutput<float> enc = model.encode(unit.src, ctx);
  Tensor<float> logits = model.decode_forward(enc, views.tgt_in, ctx);
  SmoothedLoss<float> loss = smoothed_loss_sum(logits, views.tgt_out, spec);
  UnitResult r;
  r.loss_sum = static_cast<double>(loss.sum_loss.item());
  r.tokens = loss.tokens;
  r.errors = loss.errors;
  backward(loss.sum_loss);
  clear_tape<float>();  // parameter gradients survive and keep accumulating
  return r;
}

EvalResult evaluate(NMTModel<float>& model, DatasetReader& data, const SmoothingSpec& spec) {
  NoGradGuard<float> ng;
  RunCtx ctx;  // dropout off
  double loss_sum = 0.0;
  int64_t tokens = 0, errors = 0;
  for (int64_t i = 0; i < data.batch_count(); ++i) {
    BatchUnit unit = data.read_batch(i);
    TeacherViews views = teacher_forcing_views(unit.tgt);
    EncoderOutput<float> enc = model.encode(unit.src, ctx);
    Tensor<float> logits = model.decode_forward(enc, views.tgt_in, ctx);
    SmoothedLoss<float> loss = smoothed_loss_sum(logits, views.tgt_out, spec);
    loss_sum += static_cast<double>(loss.sum_loss.item());
    tokens += loss.tokens;
    errors += loss.errors;
  }
  EvalResult r;
  r.tokens = tokens;
  if (tokens > 0) {
    r.loss = loss_sum / static_cast<double>(tokens);
    r.error_rate = static_cast<double>(errors) / static_cast<double>(tokens);
  }
  return r;
}

std::vector<int64_t> dynamic_sample(const std::vector<double>& unit_losses, double dss_ws, double dss_rm,
                                    int64_t n_units, uint64_t seed, int64_t epoch) {
  if ((dss_ws <= 0.0 && dss_rm <= 0.0) || epoch <= 1 || unit_losses.empty())
    return epoch_order(epoch, n_units, seed);
  if (static_cast<int64_t>(unit_losses.size()) != n_units)
    throw std::invalid_argument("dynamic sampling: " + std::to_string(unit_losses.size()) +
                                " unit losses for " + std::to_string(n_units) + " units");
  RngStream rng(seed, kSampleStreamBase + static_cast<uint64_t>(epoch));
  auto clamp_count = [n_units](double frac) {
    int64_t k = static_cast<int64_t>(std::llround(frac * static_cast<double>(n_units)));
    return std::clamp<int64_t>(k, 0, n_units);
  };
  int64_t k_weighted = clamp_count(dss_ws);

  // Weighted draw without replacement: each unit gets the key u^(1/loss), the
  // largest k keys win. Draws are consumed in index order so the schedule is a
  // pure function of (seed, epoch, losses).
  std::vector<double> keys(static_cast<size_t>(n_units));
  for (int64_t i = 0; i < n_units; ++i) {
    double w = std::max(unit_losses[static_cast<size_t>(i)], 1e-9);
    keys[static_cast<size_t>(i)] = std::pow(rng.next_u01(), 1.0 / w);
  }
  std::vector<int64_t> by_key(static_cast<size_t>(n_units));
  std::iota(by_key.begin(), by_key.end(), int64_t(0));
  std::sort(by_key.begin(), by_key.end(), [&](int64_t a, int64_t b) {
    double ka = keys[static_cast<size_t>(a)], kb = keys[static_cast<size_t>(b)];
    if (ka != kb) return ka > kb;
    return a < b;
  });

  std::vector<int64_t> schedule(by_key.begin(), by_key.begin() + k_weighted);
  std::vector<int64_t> rest(by_key.begin() + k_weighted, by_key.end());
  std::sort(rest.begin(), rest.end());
  shuffle_in_place(rest, rng);
  schedule.insert(schedule.end(), rest.begin(), rest.end());

  int64_t k_review = clamp_count(dss_rm);
  if (k_review > 0) {
    std::vector<int64_t> by_loss(static_cast<size_t>(n_units));
    std::iota(by_loss.begin(), by_loss.end(), int64_t(0));
    std::sort(by_loss.begin(), by_loss.end(), [&](int64_t a, int64_t b) {
      double la = unit_losses[static_cast<size_t>(a)], lb = unit_losses[static_cast<size_t>(b)];
      if (la != lb) return la > lb;
      return a < b;
    });
    schedule.insert(schedule.end(), by_loss.begin(), by_loss.begin() + k_review);
  }
  return schedule;
}

TrainOutcome train_loop(NMTModel<float>& model, DatasetReader& train, DatasetReader* dev,
                        const TrainConfig& cfg, const std::string& out_dir, std::ostream* log,
                        const std::string& resume_path) {
  cfg.validate();
  int64_t n_units = train.batch_count();
  if (n_units < 1) throw ConfigError("training: dataset has no batches");
  fs::create_directories(out_dir);

  ParamList<float> params = model.named_params();
  AdamState<float> opt;
  adam_init(opt, params);
  AdamConfig acfg;
  acfg.use_ams = cfg.use_ams;
  acfg.weight_decay = cfg.weight_decay;
  SmoothingSpec spec = spec_of(cfg);

  TrainState st;
  st.epoch = 1;
  st.seed = cfg.seed;
  st.cur_unit_losses.assign(static_cast<size_t>(n_units), 0.0);

  if (!resume_path.empty()) {
    CheckpointData ckpt = load_checkpoint(resume_path);
    load_params_into(ckpt, params);
    if (!ckpt.has_optimizer || !ckpt.has_train_state)
      throw FormatError("resume: '" + resume_path + "' has no optimizer or training state");
    if (ckpt.optimizer.m.size() != params.size())
      throw FormatError("resume: optimizer state tracks " + std::to_string(ckpt.optimizer.m.size()) +
                        " parameters, the model has " + std::to_string(params.size()));
    opt = ckpt.optimizer;
    st = ckpt.train;
    if (static_cast<int64_t>(st.cur_unit_losses.size()) != n_units)
      throw ConfigError("resume: checkpoint tracks " + std::to_string(st.cur_unit_losses.size()) +
                        " units but the dataset has " + std::to_string(n_units));
  }

  RngCounter drop_rng{st.seed, st.dropout_blocks};
  RunCtx train_ctx{true, &drop_rng};

  std::vector<std::string> rolling = existing_rolling(out_dir);
  auto save_full = [&](const std::string& path) {
    st.dropout_blocks = drop_rng.next_block_id;
    st.opt_steps = opt.step;
    save_checkpoint(path, snapshot(params, &opt, &st));
  };

  say(log, "training: " + std::to_string(n_units) + " units, " + std::to_string(model.param_count()) +
               " parameters");

  double report_loss = 0.0;
  int64_t report_tokens = 0, report_units = 0;
  double acc_loss = 0.0;
  int64_t acc_tokens = 0;
  int64_t epochs_done = st.epoch - 1;
  bool stop = false, early = false;

  while (!stop && st.epoch <= cfg.maxrun) {
    std::vector<int64_t> schedule = schedule_for_epoch(st, cfg, n_units);
    while (!stop && st.unit_cursor < static_cast<int64_t>(schedule.size())) {
      int64_t unit_id = schedule[static_cast<size_t>(st.unit_cursor)];
      BatchUnit unit = train.read_batch(unit_id);
      UnitResult r = train_unit(model, unit, spec, train_ctx);
      st.unit_cursor++;
      acc_loss += r.loss_sum;
      acc_tokens += r.tokens;
      report_loss += r.loss_sum;
      report_tokens += r.tokens;
      report_units++;
      if (r.tokens > 0)
        st.cur_unit_losses[static_cast<size_t>(unit_id)] = r.loss_sum / static_cast<double>(r.tokens);

      bool epoch_exhausted = st.unit_cursor >= static_cast<int64_t>(schedule.size());
      if ((acc_tokens > cfg.tokens_optm || epoch_exhausted) && acc_tokens > 0) {
        double lr = noam_lr(opt.step + 1, model.config().isize, cfg.warm_step);
        scale_grads(params, 1.0 / static_cast<double>(acc_tokens));
        adam_step(params, opt, lr, acfg);
        zero_grads(params);
        acc_loss = 0.0;
        acc_tokens = 0;
        // Saves happen only here, between optimizer steps, so a checkpoint
        // never carries half-accumulated gradients.
        if (cfg.save_every > 0 && st.epoch >= cfg.epoch_start_checkpoint_save &&
            opt.step % cfg.save_every == 0) {
          std::string path = out_dir + "/checkpoint_" + std::to_string(opt.step) + ".ntck";
          save_full(path);
          rolling.push_back(path);
          while (static_cast<int64_t>(rolling.size()) > cfg.num_checkpoint) {
            fs::remove(rolling.front());
            rolling.erase(rolling.begin());
          }
        }
        if (cfg.training_steps > 0 && opt.step >= cfg.training_steps) stop = true;
      }
      if (report_units >= cfg.batch_report && report_tokens > 0) {
        double lr_now = noam_lr(std::max<int64_t>(opt.step, 1), model.config().isize, cfg.warm_step);
        say(log, "step " + std::to_string(opt.step) + " epoch " + std::to_string(st.epoch) + " loss " +
                     fmt_real(report_loss / static_cast<double>(report_tokens)) + " lr " + fmt_real(lr_now));
        report_loss = 0.0;
        report_tokens = 0;
        report_units = 0;
      }
    }
    if (stop) break;

    if (dev) {
      EvalResult ev = evaluate(model, *dev, spec);
      if (cfg.report_eva)
        say(log, "epoch " + std::to_string(st.epoch) + " dev loss " + fmt_real(ev.loss) + " err " +
                     fmt_real(ev.error_rate));
      bool improved = !st.has_best || ev.loss < st.best_loss || ev.error_rate < st.best_err;
      if (improved) {
        st.best_loss = st.has_best ? std::min(st.best_loss, ev.loss) : ev.loss;
        st.best_err = st.has_best ? std::min(st.best_err, ev.error_rate) : ev.error_rate;
        st.has_best = true;
        st.noimprove_epochs = 0;
        save_checkpoint(out_dir + "/model_best.ntck", snapshot(params, nullptr, nullptr));
      } else {
        st.noimprove_epochs++;
      }
    }
    if (cfg.epoch_save)
      save_checkpoint(out_dir + "/model_epoch_" + std::to_string(st.epoch) + ".ntck",
                      snapshot(params, nullptr, nullptr));
    epochs_done = st.epoch;
    if (dev && cfg.earlystop > 0 && st.noimprove_epochs >= cfg.earlystop) {
      early = true;
      stop = true;
    }
    st.prev_unit_losses = st.cur_unit_losses;
    st.epoch++;
    st.unit_cursor = 0;
  }

  save_full(out_dir + "/model_last.ntck");
  TrainOutcome out;
  out.best_path = st.has_best ? out_dir + "/model_best.ntck" : out_dir + "/model_last.ntck";
  out.epochs = epochs_done;
  out.opt_steps = opt.step;
  out.best_loss = st.best_loss;
  out.best_err = st.best_err;
  out.has_best = st.has_best;
  out.early_stopped = early;
  say(log, "done: epochs " + std::to_string(out.epochs) + " steps " + std::to_string(out.opt_steps));
  return out;
}

}  // namespace nmtk
