#pragma once

#include <string>
#include <vector>

#include "nmtk/checkpoint.hpp"
#include "nmtk/tensor.hpp"

namespace nmtk {

// Elementwise mean of the named parameters across checkpoint files. Sums run
// in 64-bit and are stored back as float32; optimizer and training state are
// dropped. All files must agree on parameter names and shapes.
CheckpointData average_checkpoints(const std::vector<std::string>& paths);

// Marks the named parameters as frozen/trainable. Gradients still flow
// through frozen tensors; the optimizer just skips their updates.
void freeze_params(ParamList<float>& params, const std::vector<std::string>& names);
void unfreeze_params(ParamList<float>& params, const std::vector<std::string>& names);

// Zero-pads every tensor along `dim` up to the largest size in the list; all
// other dimensions must already agree.
template <typename S>
std::vector<Tensor<S>> pad_tensors(const std::vector<Tensor<S>>& tensors, int dim) {
  if (tensors.empty()) return {};
  int rank = tensors[0].rank();
  if (dim < 0 || dim >= rank)
    throw std::invalid_argument("pad_tensors: dim " + std::to_string(dim) + " out of range for rank " +
                                std::to_string(rank));
  int64_t target = 0;
  for (const auto& t : tensors) {
    if (t.rank() != rank)
      throw std::invalid_argument("pad_tensors: mixed ranks " + std::to_string(rank) + " and " +
                                  std::to_string(t.rank()));
    for (int a = 0; a < rank; ++a)
      if (a != dim && t.dim(a) != tensors[0].dim(a))
        throw std::invalid_argument("pad_tensors: shapes " + shape_to_string(tensors[0].shape()) + " and " +
                                    shape_to_string(t.shape()) + " disagree outside dim " +
                                    std::to_string(dim));
    target = std::max(target, t.dim(dim));
  }
  std::vector<Tensor<S>> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) {
    if (t.dim(dim) == target) {
      out.push_back(t);
      continue;
    }
    std::vector<int64_t> shape = t.shape();
    int64_t inner = 1, outer = 1;
    for (int a = dim + 1; a < rank; ++a) inner *= shape[static_cast<size_t>(a)];
    for (int a = 0; a < dim; ++a) outer *= shape[static_cast<size_t>(a)];
    int64_t d = shape[static_cast<size_t>(dim)];
    shape[static_cast<size_t>(dim)] = target;
    Tensor<S> padded(shape);
    auto src = t.values();
    auto dst = padded.values();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < d; ++j)
        for (int64_t i = 0; i < inner; ++i)
          dst[static_cast<size_t>((o * target + j) * inner + i)] =
              src[static_cast<size_t>((o * d + j) * inner + i)];
    out.push_back(padded);
  }
  return out;
}

}  // namespace nmtk
