#include "nmtk/dataset.hpp"

#include <bit>
#include <cstring>

static_assert(std::endian::native == std::endian::little,
              "dataset serialization assumes a little-endian host");

namespace nmtk {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'R', 'N'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::string& path, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("dataset: " + path + " truncated while reading " + what);
  return v;
}

void put_matrix(std::ofstream& out, const IdMatrix& m) {
  for (int32_t id : m.v) put<uint32_t>(out, static_cast<uint32_t>(id));
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<BatchUnit>& batches, uint32_t src_vocab,
                   uint32_t tgt_vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("dataset: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  put<uint32_t>(out, 1);
  put<uint32_t>(out, src_vocab);
  put<uint32_t>(out, tgt_vocab);
  put<uint64_t>(out, static_cast<uint64_t>(batches.size()));
  uint64_t offset_table_pos = 16 + 8;
  uint64_t data_pos = offset_table_pos + 8 * batches.size();
  std::vector<uint64_t> offsets;
  offsets.reserve(batches.size());
  uint64_t pos = data_pos;
  for (const auto& b : batches) {
    offsets.push_back(pos);
    pos += 12 + 4 * static_cast<uint64_t>(b.src.numel() + b.tgt.numel());
  }
  for (uint64_t o : offsets) put<uint64_t>(out, o);
  for (const auto& b : batches) {
    put<uint32_t>(out, static_cast<uint32_t>(b.src.rows));
    put<uint32_t>(out, static_cast<uint32_t>(b.src.cols));
    put<uint32_t>(out, static_cast<uint32_t>(b.tgt.cols));
    put_matrix(out, b.src);
    put_matrix(out, b.tgt);
  }
  if (!out) throw FormatError("dataset: write failed on " + path);
}

DatasetReader::DatasetReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw FormatError("dataset: cannot open " + path);
  char magic[4];
  in_.read(magic, 4);
  if (!in_ || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("dataset: " + path + " has a bad magic number");
  header_.version = take<uint32_t>(in_, path_, "version");
  if (header_.version != 1)
    throw FormatError("dataset: " + path + " has unsupported version " + std::to_string(header_.version));
  header_.src_vocab = take<uint32_t>(in_, path_, "source vocab size");
  header_.tgt_vocab = take<uint32_t>(in_, path_, "target vocab size");
  header_.batch_count = take<uint64_t>(in_, path_, "batch count");
  offsets_.resize(header_.batch_count);
  for (auto& o : offsets_) o = take<uint64_t>(in_, path_, "offset table");
}

BatchUnit DatasetReader::read_batch(int64_t i) {
  if (i < 0 || i >= batch_count())
    throw std::out_of_range("dataset: batch " + std::to_string(i) + " out of range, file has " +
                            std::to_string(batch_count()));
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offsets_[static_cast<size_t>(i)]));
  uint32_t rows = take<uint32_t>(in_, path_, "batch rows");
  uint32_t src_cols = take<uint32_t>(in_, path_, "source cols");
  uint32_t tgt_cols = take<uint32_t>(in_, path_, "target cols");
  BatchUnit b{IdMatrix(rows, src_cols), IdMatrix(rows, tgt_cols)};
  for (auto* m : {&b.src, &b.tgt})
    for (auto& id : m->v) id = static_cast<int32_t>(take<uint32_t>(in_, path_, "batch ids"));
  return b;
}

std::vector<BatchUnit> read_all_batches(const std::string& path) {
  DatasetReader r(path);
  std::vector<BatchUnit> out;
  out.reserve(static_cast<size_t>(r.batch_count()));
  for (int64_t i = 0; i < r.batch_count(); ++i) out.push_back(r.read_batch(i));
  return out;
}

}  // namespace nmtk
