#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nmtk/batching.hpp"
#include "nmtk/checkpoint.hpp"
#include "nmtk/dataset.hpp"
#include "nmtk/loss.hpp"
#include "nmtk/model.hpp"
#include "nmtk/optimizer.hpp"

namespace nmtk {

// Teacher-forcing views of a stored target block (<sos> ... <eos> pad*):
// the decoder reads everything but the last column and predicts the shift.
struct TeacherViews {
  IdMatrix tgt_in;
  IdMatrix tgt_out;
};
TeacherViews teacher_forcing_views(const IdMatrix& tgt);

// One training unit: forward, smoothed loss, backward. Gradients accumulate
// into the parameters; the tape is cleared afterwards so units stay O(1).
struct UnitResult {
  double loss_sum = 0.0;
  int64_t tokens = 0;
  int64_t errors = 0;
};
UnitResult train_unit(NMTModel<float>& model, const BatchUnit& unit, const SmoothingSpec& spec,
                      const RunCtx& ctx);

struct EvalResult {
  double loss = 0.0;        // per-token smoothed cross entropy
  double error_rate = 0.0;  // argmax mismatches over non-pad tokens
  int64_t tokens = 0;
};
EvalResult evaluate(NMTModel<float>& model, DatasetReader& data, const SmoothingSpec& spec);

// Epoch schedule. With both ratios zero this is exactly the epoch_order
// permutation. Otherwise a dss_ws fraction of the units is drawn first by
// loss-proportional sampling without replacement, the rest follows uniformly
// shuffled, and the dss_rm highest-loss units are appended again for review.
std::vector<int64_t> dynamic_sample(const std::vector<double>& unit_losses, double dss_ws, double dss_rm,
                                    int64_t n_units, uint64_t seed, int64_t epoch);

struct TrainOutcome {
  std::string best_path;  // best-on-validation model, or the final state without a dev set
  int64_t epochs = 0;
  int64_t opt_steps = 0;
  double best_loss = 0.0;
  double best_err = 0.0;
  bool has_best = false;
  bool early_stopped = false;
};

// Runs the full training loop, writing checkpoints and logs under out_dir.
// Everything downstream of `seed` is deterministic; pass resume_path to
// continue a run from a saved full checkpoint, reproducing the uninterrupted
// run bit for bit.
TrainOutcome train_loop(NMTModel<float>& model, DatasetReader& train, DatasetReader* dev,
                        const TrainConfig& cfg, const std::string& out_dir, std::ostream* log,
                        const std::string& resume_path = "");

}  // namespace nmtk
