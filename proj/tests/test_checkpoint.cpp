#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "nmtk/checkpoint.hpp"
#include "nmtk/model.hpp"

using namespace nmtk;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

CheckpointData sample_checkpoint() {
  CheckpointData d;
  Tensor<float> a({2, 3});
  for (int64_t i = 0; i < 6; ++i) a.values()[i] = 0.25f * static_cast<float>(i) - 1.0f;
  Tensor<float> b({4});
  for (int64_t i = 0; i < 4; ++i) b.values()[i] = -0.5f + 0.1f * static_cast<float>(i);
  d.params.push_back({"layer.weight", a});
  d.params.push_back({"layer.bias", b});
  return d;
}

}  // namespace

TEST_CASE("parameter-only checkpoints round-trip bit for bit") {
  auto d = sample_checkpoint();
  std::string path = temp_path("nmtk_ckpt_params.bin");
  save_checkpoint(path, d);
  auto back = load_checkpoint(path);
  REQUIRE(back.params.size() == 2);
  CHECK_FALSE(back.has_optimizer);
  CHECK_FALSE(back.has_train_state);
  for (size_t p = 0; p < 2; ++p) {
    CHECK(back.params[p].name == d.params[p].name);
    REQUIRE(back.params[p].tensor.shape() == d.params[p].tensor.shape());
    auto want = d.params[p].tensor.values();
    auto got = back.params[p].tensor.values();
    for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == want[i]);
  }
  std::remove(path.c_str());
}

TEST_CASE("optimizer and training state sections round-trip") {
  auto d = sample_checkpoint();
  d.has_optimizer = true;
  d.optimizer.step = 123;
  d.optimizer.m = {{1.f, 2.f, 3.f, 4.f, 5.f, 6.f}, {0.1f, 0.2f, 0.3f, 0.4f}};
  d.optimizer.v = {{6.f, 5.f, 4.f, 3.f, 2.f, 1.f}, {0.4f, 0.3f, 0.2f, 0.1f}};
  d.optimizer.vhat = {{9.f, 9.f, 9.f, 9.f, 9.f, 9.f}, {1.f, 1.f, 1.f, 1.f}};
  d.has_train_state = true;
  d.train.epoch = 3;
  d.train.opt_steps = 4567;
  d.train.unit_cursor = 89;
  d.train.dropout_blocks = 0xDEADBEEFull;
  d.train.seed = 42;
  d.train.best_loss = 2.34567890123;
  d.train.best_err = 0.125;
  d.train.has_best = true;
  d.train.noimprove_epochs = 2;
  d.train.prev_unit_losses = {1.5, 2.5, 3.5};
  d.train.cur_unit_losses = {0.5};

  std::string path = temp_path("nmtk_ckpt_full.bin");
  save_checkpoint(path, d);
  auto back = load_checkpoint(path);

  REQUIRE(back.has_optimizer);
  CHECK(back.optimizer.step == 123);
  CHECK(back.optimizer.m == d.optimizer.m);
  CHECK(back.optimizer.v == d.optimizer.v);
  CHECK(back.optimizer.vhat == d.optimizer.vhat);

  REQUIRE(back.has_train_state);
  CHECK(back.train.epoch == 3);
  CHECK(back.train.opt_steps == 4567);
  CHECK(back.train.unit_cursor == 89);
  CHECK(back.train.dropout_blocks == 0xDEADBEEFull);
  CHECK(back.train.seed == 42);
  CHECK(back.train.best_loss == 2.34567890123);
  CHECK(back.train.best_err == 0.125);
  CHECK(back.train.has_best);
  CHECK(back.train.noimprove_epochs == 2);
  CHECK(back.train.prev_unit_losses == d.train.prev_unit_losses);
  CHECK(back.train.cur_unit_losses == d.train.cur_unit_losses);
  std::remove(path.c_str());
}

TEST_CASE("saving and reloading a model reproduces its outputs exactly") {
  ModelConfig cfg;
  cfg.isize = 8;
  cfg.nlayer = 2;
  cfg.ff_hsize = 16;
  cfg.nhead = 2;
  cfg.drop = 0.0;
  cfg.attn_drop = 0.0;
  cfg.src_vocab = 10;
  cfg.tgt_vocab = 12;

  NMTModel<float> original(cfg, 11);
  NMTModel<float> reloaded(cfg, 99);  // different random start

  CheckpointData d;
  for (const auto& p : original.named_params()) d.params.push_back(p);
  std::string path = temp_path("nmtk_ckpt_model.bin");
  save_checkpoint(path, d);

  auto back = load_checkpoint(path);
  auto target = reloaded.named_params();
  load_params_into(back, target);

  NoGradGuard<float> guard;
  RunCtx ctx;
  IdMatrix src(1, 4, {5, 6, 7, 2});
  IdMatrix tgt_in(1, 3, {1, 5, 6});
  Tensor<float> a = original.decode_forward(original.encode(src, ctx), tgt_in, ctx);
  Tensor<float> b = reloaded.decode_forward(reloaded.encode(src, ctx), tgt_in, ctx);
  REQUIRE(a.numel() == b.numel());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
  std::remove(path.c_str());
}

TEST_CASE("the first divergent parameter is reported by name") {
  auto d = sample_checkpoint();
  ParamList<float> wrong_name;
  wrong_name.push_back({"layer.weight", Tensor<float>({2, 3})});
  wrong_name.push_back({"layer.gain", Tensor<float>({4})});
  try {
    load_params_into(d, wrong_name);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    std::string msg = e.what();
    CHECK(msg.find("layer.bias") != std::string::npos);
    CHECK(msg.find("layer.gain") != std::string::npos);
  }

  ParamList<float> wrong_shape;
  wrong_shape.push_back({"layer.weight", Tensor<float>({3, 2})});
  wrong_shape.push_back({"layer.bias", Tensor<float>({4})});
  try {
    load_params_into(d, wrong_shape);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    std::string msg = e.what();
    CHECK(msg.find("layer.weight") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }

  ParamList<float> too_few;
  too_few.push_back({"layer.weight", Tensor<float>({2, 3})});
  CHECK_THROWS_AS(load_params_into(d, too_few), FormatError);
}

TEST_CASE("corrupted files are rejected") {
  auto d = sample_checkpoint();
  std::string path = temp_path("nmtk_ckpt_corrupt.bin");
  save_checkpoint(path, d);

  // bad magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  // bad version
  save_checkpoint(path, d);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    uint32_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  // truncation
  save_checkpoint(path, d);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 7);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  CHECK_THROWS_AS(load_checkpoint(temp_path("nmtk_ckpt_missing.bin")), FormatError);
  std::remove(path.c_str());
}
