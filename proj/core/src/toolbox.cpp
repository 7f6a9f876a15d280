#include "nmtk/toolbox.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace nmtk {

CheckpointData average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("average: no checkpoints given");
  CheckpointData first = load_checkpoint(paths[0]);
  size_t n_params = first.params.size();
  std::vector<std::vector<double>> sums(n_params);
  for (size_t p = 0; p < n_params; ++p) {
    auto vals = first.params[p].tensor.values();
    sums[p].assign(vals.begin(), vals.end());
  }
  for (size_t f = 1; f < paths.size(); ++f) {
    CheckpointData next = load_checkpoint(paths[f]);
    if (next.params.size() != n_params)
      throw FormatError("average: '" + paths[f] + "' holds " + std::to_string(next.params.size()) +
                        " parameters, '" + paths[0] + "' holds " + std::to_string(n_params));
    for (size_t p = 0; p < n_params; ++p) {
      if (next.params[p].name != first.params[p].name)
        throw FormatError("average: parameter " + std::to_string(p) + " is '" + next.params[p].name +
                          "' in '" + paths[f] + "' but '" + first.params[p].name + "' in '" + paths[0] +
                          "'");
      if (next.params[p].tensor.shape() != first.params[p].tensor.shape())
        throw FormatError("average: parameter '" + first.params[p].name + "' has shape " +
                          shape_to_string(next.params[p].tensor.shape()) + " in '" + paths[f] +
                          "' but " + shape_to_string(first.params[p].tensor.shape()) + " in '" +
                          paths[0] + "'");
      auto vals = next.params[p].tensor.values();
      for (size_t i = 0; i < vals.size(); ++i) sums[p][i] += static_cast<double>(vals[i]);
    }
  }
  double inv = 1.0 / static_cast<double>(paths.size());
  CheckpointData out;
  for (size_t p = 0; p < n_params; ++p) {
    Tensor<float> t(first.params[p].tensor.shape());
    auto vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(sums[p][i] * inv);
    out.params.push_back({first.params[p].name, t});
  }
  return out;
}

namespace {

void set_trainable(ParamList<float>& params, const std::vector<std::string>& names, bool value) {
  std::unordered_set<std::string> want(names.begin(), names.end());
  for (auto& p : params)
    if (want.erase(p.name)) p.tensor.data()->trainable = value;
  if (!want.empty())
    throw std::invalid_argument("no parameter named '" + *want.begin() + "' in the model");
}

}  // namespace

void freeze_params(ParamList<float>& params, const std::vector<std::string>& names) {
  set_trainable(params, names, false);
}

void unfreeze_params(ParamList<float>& params, const std::vector<std::string>& names) {
  set_trainable(params, names, true);
}

}  // namespace nmtk
