#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nmtk/modules.hpp"

namespace nmtk {

// Inverse-sqrt schedule with linear warm-up; peaks at step == warm_step.
inline double noam_lr(int64_t step, int64_t isize, int64_t warm_step) {
  double s = static_cast<double>(step);
  double w = static_cast<double>(warm_step);
  return std::pow(static_cast<double>(isize), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  bool use_ams = false;
  double weight_decay = 0.0;
};

template <typename S>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<S>> m;     // first moments, aligned with the param list
  std::vector<std::vector<S>> v;     // second moments
  std::vector<std::vector<S>> vhat;  // running max of v when AMSGrad is on
};

template <typename S>
void adam_init(AdamState<S>& st, const ParamList<S>& params) {
  st.step = 0;
  st.m.clear();
  st.v.clear();
  st.vhat.clear();
  for (const auto& p : params) {
    st.m.emplace_back(static_cast<size_t>(p.tensor.numel()), S(0));
    st.v.emplace_back(static_cast<size_t>(p.tensor.numel()), S(0));
    st.vhat.emplace_back(static_cast<size_t>(p.tensor.numel()), S(0));
  }
}

// One update over pre-populated gradients. Frozen parameters (trainable off)
// keep their values and skip moment updates.
template <typename S>
void adam_step(ParamList<S>& params, AdamState<S>& st, double lr, const AdamConfig& cfg) {
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam: state tracks " + std::to_string(st.m.size()) + " parameters, got " +
                                std::to_string(params.size()));
  st.step++;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& t = params[pi].tensor;
    if (!t.data()->trainable) continue;
    auto vals = t.values();
    auto grads = t.grad();
    auto& m = st.m[pi];
    auto& v = st.v[pi];
    auto& vh = st.vhat[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      double g = static_cast<double>(grads[i]) + cfg.weight_decay * static_cast<double>(vals[i]);
      double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      double denom_v = vi;
      if (cfg.use_ams) {
        if (vi > static_cast<double>(vh[i])) vh[i] = static_cast<S>(vi);
        denom_v = static_cast<double>(vh[i]);
      }
      double update = lr * (mi / bc1) / (std::sqrt(denom_v / bc2) + cfg.eps);
      vals[i] = static_cast<S>(static_cast<double>(vals[i]) - update);
    }
  }
}

template <typename S>
void zero_grads(ParamList<S>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

template <typename S>
void scale_grads(ParamList<S>& params, double factor) {
  for (auto& p : params)
    for (auto& g : p.tensor.grad()) g = static_cast<S>(static_cast<double>(g) * factor);
}

}  // namespace nmtk
