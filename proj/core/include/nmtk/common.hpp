#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmtk {

// Unreadable or corrupt on-disk data: datasets, checkpoints, vocab files.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values or inconsistent option combinations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major matrix of token ids. Rows are sentences, columns positions.
struct IdMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int32_t> v;

  IdMatrix() = default;
  IdMatrix(int64_t r, int64_t c, int32_t fill = 0)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}
  IdMatrix(int64_t r, int64_t c, std::vector<int32_t> vals) : rows(r), cols(c), v(std::move(vals)) {
    if (static_cast<int64_t>(v.size()) != r * c)
      throw std::invalid_argument("IdMatrix: " + std::to_string(v.size()) + " values for " + std::to_string(r) +
                                  "x" + std::to_string(c));
  }

  int32_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  int32_t at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  int64_t numel() const { return rows * cols; }
};

inline std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace nmtk
