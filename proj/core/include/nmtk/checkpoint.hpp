#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmtk/modules.hpp"
#include "nmtk/optimizer.hpp"

namespace nmtk {

// Training progress needed to resume a run bit-for-bit.
struct TrainState {
  int64_t epoch = 0;
  int64_t opt_steps = 0;
  int64_t unit_cursor = 0;        // position inside the current epoch's schedule
  uint64_t dropout_blocks = 0;    // RngCounter progress
  uint64_t seed = 0;
  double best_loss = 0.0;
  double best_err = 0.0;
  bool has_best = false;
  int64_t noimprove_epochs = 0;
  std::vector<double> prev_unit_losses;  // per-unit losses of the finished epoch
  std::vector<double> cur_unit_losses;   // per-unit losses collected so far
};

// On-disk container: magic "NTCK", u32 version=1, u8 has_optimizer,
// u8 has_train_state, then named float32 parameter records, then the optional
// sections. Little-endian.
struct CheckpointData {
  std::vector<NamedParam<float>> params;
  bool has_optimizer = false;
  AdamState<float> optimizer;
  bool has_train_state = false;
  TrainState train;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Copies values into the model's parameters, matching strictly by name and
// shape; the first divergence is reported by name.
void load_params_into(const CheckpointData& ckpt, ParamList<float>& params);

}  // namespace nmtk
