#include "nmtk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nmtk/common.hpp"

namespace nmtk {

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kMagic[4] = {'N', 'T', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint: unexpected end of file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  uint32_t n = get<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("checkpoint: unexpected end of file");
  return s;
}

template <typename T>
void put_vec(std::ostream& os, const std::vector<T>& v) {
  put<uint64_t>(os, static_cast<uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> get_vec(std::istream& is) {
  uint64_t n = get<uint64_t>(is);
  std::vector<T> v(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw FormatError("checkpoint: unexpected end of file");
  return v;
}

template <typename T>
void put_raw(std::ostream& os, const T* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot open " + path + " for writing");

  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  put<uint8_t>(os, data.has_optimizer ? 1 : 0);
  put<uint8_t>(os, data.has_train_state ? 1 : 0);

  put<uint64_t>(os, static_cast<uint64_t>(data.params.size()));
  for (const auto& p : data.params) {
    put_string(os, p.name);
    const auto& shape = p.tensor.shape();
    put<uint32_t>(os, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) put<uint64_t>(os, static_cast<uint64_t>(d));
    auto vals = p.tensor.values();
    put_raw(os, vals.data(), vals.size());
  }

  if (data.has_optimizer) {
    const auto& opt = data.optimizer;
    if (opt.m.size() != data.params.size() || opt.v.size() != data.params.size() ||
        opt.vhat.size() != data.params.size())
      throw std::invalid_argument("checkpoint: optimizer state is not aligned with the parameter list");
    put<int64_t>(os, opt.step);
    for (size_t i = 0; i < data.params.size(); ++i) {
      put_vec(os, opt.m[i]);
      put_vec(os, opt.v[i]);
      put_vec(os, opt.vhat[i]);
    }
  }

  if (data.has_train_state) {
    const auto& t = data.train;
    put<int64_t>(os, t.epoch);
    put<int64_t>(os, t.opt_steps);
    put<int64_t>(os, t.unit_cursor);
    put<uint64_t>(os, t.dropout_blocks);
    put<uint64_t>(os, t.seed);
    put<double>(os, t.best_loss);
    put<double>(os, t.best_err);
    put<uint8_t>(os, t.has_best ? 1 : 0);
    put<int64_t>(os, t.noimprove_epochs);
    put_vec(os, t.prev_unit_losses);
    put_vec(os, t.cur_unit_losses);
  }

  if (!os) throw FormatError("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path);

  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  uint32_t version = get<uint32_t>(is);
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);

  CheckpointData data;
  data.has_optimizer = get<uint8_t>(is) != 0;
  data.has_train_state = get<uint8_t>(is) != 0;

  uint64_t nparams = get<uint64_t>(is);
  data.params.reserve(static_cast<size_t>(nparams));
  for (uint64_t i = 0; i < nparams; ++i) {
    std::string name = get_string(is);
    uint32_t rank = get<uint32_t>(is);
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<int64_t>(get<uint64_t>(is));
      if (shape[r] <= 0) throw FormatError("checkpoint: non-positive dimension in " + name);
      numel *= shape[r];
    }
    std::vector<float> vals(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!is) throw FormatError("checkpoint: unexpected end of file");
    data.params.push_back({std::move(name), Tensor<float>::from(std::move(shape), std::move(vals))});
  }

  if (data.has_optimizer) {
    data.optimizer.step = get<int64_t>(is);
    for (uint64_t i = 0; i < nparams; ++i) {
      data.optimizer.m.push_back(get_vec<float>(is));
      data.optimizer.v.push_back(get_vec<float>(is));
      data.optimizer.vhat.push_back(get_vec<float>(is));
    }
  }

  if (data.has_train_state) {
    auto& t = data.train;
    t.epoch = get<int64_t>(is);
    t.opt_steps = get<int64_t>(is);
    t.unit_cursor = get<int64_t>(is);
    t.dropout_blocks = get<uint64_t>(is);
    t.seed = get<uint64_t>(is);
    t.best_loss = get<double>(is);
    t.best_err = get<double>(is);
    t.has_best = get<uint8_t>(is) != 0;
    t.noimprove_epochs = get<int64_t>(is);
    t.prev_unit_losses = get_vec<double>(is);
    t.cur_unit_losses = get_vec<double>(is);
  }

  return data;
}

void load_params_into(const CheckpointData& ckpt, ParamList<float>& params) {
  if (ckpt.params.size() != params.size())
    throw FormatError("checkpoint: parameter count mismatch: file has " +
                      std::to_string(ckpt.params.size()) + ", model has " +
                      std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& from = ckpt.params[i];
    auto& to = params[i];
    if (from.name != to.name)
      throw FormatError("checkpoint: parameter " + std::to_string(i) + " is '" + from.name +
                        "' in the file but '" + to.name + "' in the model");
    if (from.tensor.shape() != to.tensor.shape())
      throw FormatError("checkpoint: shape mismatch for '" + from.name + "': file " +
                        shape_to_string(from.tensor.shape()) + ", model " +
                        shape_to_string(to.tensor.shape()));
    auto src = from.tensor.values();
    auto dst = to.tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace nmtk
