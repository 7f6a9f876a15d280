#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nmtk/batching.hpp"

namespace nmtk {

// Binary dataset container with O(1) random batch access.
//
// Layout, little-endian throughout:
//   magic "NTRN", u32 version=1, u32 src_vocab, u32 tgt_vocab,
//   u64 batch_count, u64 offset[batch_count],
//   then per batch: u32 rows, u32 src_cols, u32 tgt_cols,
//   row-major u32 ids (src matrix, then tgt matrix).

struct DatasetHeader {
  uint32_t version = 1;
  uint32_t src_vocab = 0;
  uint32_t tgt_vocab = 0;
  uint64_t batch_count = 0;
};

void write_dataset(const std::string& path, const std::vector<BatchUnit>& batches, uint32_t src_vocab,
                   uint32_t tgt_vocab);

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);

  const DatasetHeader& header() const { return header_; }
  int64_t batch_count() const { return static_cast<int64_t>(header_.batch_count); }

  // Seeks straight to the recorded offset; touches only that batch's bytes.
  BatchUnit read_batch(int64_t i);

 private:
  std::string path_;
  std::ifstream in_;
  DatasetHeader header_;
  std::vector<uint64_t> offsets_;
};

std::vector<BatchUnit> read_all_batches(const std::string& path);

}  // namespace nmtk
