#pragma once

// Shared oracles for the test suite. These are written against the math, not
// against the library internals, so a bug in an op and a bug in its gradient
// cannot cancel out.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nmtk/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-6, std::fabs(a) + std::fabs(b));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "param 2 elem 7: ad=.. fd=.."
};

// Central finite differences against reverse-mode gradients, in double.
// `f` must rebuild the whole graph from the current parameter values and
// return a scalar loss. Checks every element of every listed parameter.
inline GradCheckResult fd_gradcheck(const std::function<nmtk::Tensor<double>()>& f,
                                    std::vector<nmtk::Tensor<double>> params, double h = 1e-5) {
  using nmtk::Tensor;
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  nmtk::clear_tape<double>();
  Tensor<double> loss = f();
  nmtk::backward(loss);
  std::vector<std::vector<double>> ad;
  for (auto& p : params) ad.emplace_back(p.grad().begin(), p.grad().end());
  nmtk::clear_tape<double>();

  GradCheckResult res;
  nmtk::NoGradGuard<double> guard;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      double keep = vals[i];
      vals[i] = keep + h;
      double up = f().item();
      vals[i] = keep - h;
      double dn = f().item();
      vals[i] = keep;
      double fd = (up - dn) / (2.0 * h);
      double e = rel_err(ad[pi][i], fd);
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = "param " + std::to_string(pi) + " elem " + std::to_string(i) +
                    ": ad=" + std::to_string(ad[pi][i]) + " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Same but only probes elements i with i % stride == phase, for large models.
inline GradCheckResult fd_gradcheck_sampled(const std::function<nmtk::Tensor<double>()>& f,
                                            std::vector<nmtk::Tensor<double>> params, size_t stride,
                                            double h = 1e-5) {
  using nmtk::Tensor;
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  nmtk::clear_tape<double>();
  Tensor<double> loss = f();
  nmtk::backward(loss);
  std::vector<std::vector<double>> ad;
  for (auto& p : params) ad.emplace_back(p.grad().begin(), p.grad().end());
  nmtk::clear_tape<double>();

  GradCheckResult res;
  nmtk::NoGradGuard<double> guard;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values();
    size_t phase = pi % std::max<size_t>(stride, 1);
    for (size_t i = phase; i < vals.size(); i += stride) {
      double keep = vals[i];
      vals[i] = keep + h;
      double up = f().item();
      vals[i] = keep - h;
      double dn = f().item();
      vals[i] = keep;
      double fd = (up - dn) / (2.0 * h);
      double e = rel_err(ad[pi][i], fd);
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = "param " + std::to_string(pi) + " elem " + std::to_string(i) +
                    ": ad=" + std::to_string(ad[pi][i]) + " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Plain triple-loop reference matmul, no transposes, no broadcasting.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, int64_t m,
                                        int64_t k, int64_t n) {
  std::vector<double> c(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t l = 0; l < k; ++l)
        acc += a[static_cast<size_t>(i * k + l)] * b[static_cast<size_t>(l * n + j)];
      c[static_cast<size_t>(i * n + j)] = acc;
    }
  return c;
}

// Reference softmax over a single row.
inline std::vector<double> naive_softmax_row(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out(x.size());
  double denom = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

// Single-query attention done longhand: scores = q.k_i/sqrt(d), softmax,
// weighted sum of values. Masked positions are excluded entirely.
inline std::vector<double> naive_attention(const std::vector<double>& q,
                                           const std::vector<std::vector<double>>& keys,
                                           const std::vector<std::vector<double>>& vals,
                                           const std::vector<bool>& masked) {
  size_t d = q.size();
  std::vector<double> scores;
  std::vector<size_t> alive;
  for (size_t i = 0; i < keys.size(); ++i) {
    if (masked[i]) continue;
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += q[j] * keys[i][j];
    scores.push_back(s / std::sqrt(static_cast<double>(d)));
    alive.push_back(i);
  }
  std::vector<double> w = naive_softmax_row(scores);
  std::vector<double> out(vals.empty() ? d : vals[0].size(), 0.0);
  for (size_t ai = 0; ai < alive.size(); ++ai)
    for (size_t j = 0; j < out.size(); ++j) out[j] += w[ai] * vals[alive[ai]][j];
  return out;
}

}  // namespace testutil
