#include "flavr/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "flavr/tensor_io.hpp"
#include "flavr/trainer.hpp"
#include "oracles.hpp"

using flavr::Checkpoint;
using flavr::FlavrConfig;
using flavr::Network;
using flavr::Tensor;

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& tag) {
  return fs::temp_directory_path() / ("flavr_ser_" + tag);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

FlavrConfig micro_config() {
  FlavrConfig cfg;
  cfg.widths = {4, 4, 4, 4, 8};
  cfg.context = 1;
  return cfg;
}

}  // namespace

TEST(TensorFile, RoundTripBothDtypes) {
  std::mt19937_64 rng(1);
  const fs::path p = temp_file("tensor.ftsr");
  Tensor<float> tf = flavr::uniform_tensor<float>({2, 3, 4}, -1.0f, 1.0f, rng);
  flavr::write_tensor_file(p.string(), tf);
  auto back = flavr::read_tensor_file(p.string());
  ASSERT_TRUE(std::holds_alternative<Tensor<float>>(back));
  const auto& tfb = std::get<Tensor<float>>(back);
  ASSERT_EQ(tfb.shape(), tf.shape());
  for (std::int64_t i = 0; i < tf.size(); ++i) ASSERT_EQ(tfb[i], tf[i]);

  Tensor<double> td = flavr::uniform_tensor<double>({5}, -1.0, 1.0, rng);
  flavr::write_tensor_file(p.string(), td);
  auto backd = flavr::read_tensor_file(p.string());
  ASSERT_TRUE(std::holds_alternative<Tensor<double>>(backd));
  for (std::int64_t i = 0; i < td.size(); ++i)
    ASSERT_EQ(std::get<Tensor<double>>(backd)[i], td[i]);
  fs::remove(p);
}

TEST(TensorFile, BadMagicAndTruncation) {
  const fs::path p = temp_file("bad.ftsr");
  std::ofstream(p, std::ios::binary) << "NOPE1234";
  EXPECT_THROW(flavr::read_tensor_file(p.string()), flavr::IoError);

  std::mt19937_64 rng(2);
  flavr::write_tensor_file(p.string(), flavr::uniform_tensor<float>({8, 8}, -1.0f, 1.0f, rng));
  std::string bytes = slurp(p);
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  try {
    flavr::read_tensor_file(p.string());
    FAIL() << "expected IoError";
  } catch (const flavr::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  fs::remove(p);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto net = Network<float>::build(micro_config(), 9);
  Checkpoint ckpt = flavr::snapshot(net, 7, 31.25);
  auto params = net.parameters();
  auto st = flavr::AdamState<float>::init(params);
  st.t = 3;
  flavr::attach_moments(ckpt, params, st);

  const fs::path a = temp_file("a.flvr"), b = temp_file("b.flvr");
  flavr::save_checkpoint(a.string(), ckpt);
  Checkpoint loaded = flavr::load_checkpoint(a.string());
  EXPECT_EQ(loaded.epoch, 7);
  EXPECT_DOUBLE_EQ(loaded.best_val_psnr, 31.25);
  EXPECT_EQ(loaded.adam_step_count, 3);
  EXPECT_TRUE(loaded.has_moments());
  flavr::save_checkpoint(b.string(), loaded);
  EXPECT_EQ(slurp(a), slurp(b));
  fs::remove(a);
  fs::remove(b);
}

TEST(Checkpoint, RestoredNetworkForwardsBitwiseEqually) {
  auto net = Network<float>::build(micro_config(), 31);
  std::mt19937_64 rng(4);
  Tensor<float> in = flavr::uniform_tensor<float>({1, 3, 2, 16, 16}, 0.0f, 1.0f, rng);
  Tensor<float> before = net.forward_raw(in);

  const fs::path p = temp_file("restore.flvr");
  flavr::save_checkpoint(p.string(), flavr::snapshot(net));
  auto net2 = Network<float>::build(micro_config(), 999);  // different init
  flavr::restore(net2, flavr::load_checkpoint(p.string()));
  Tensor<float> after = net2.forward_raw(in);
  ASSERT_EQ(before.shape(), after.shape());
  for (std::int64_t i = 0; i < before.size(); ++i) ASSERT_EQ(before[i], after[i]);
  fs::remove(p);
}

TEST(Checkpoint, DistinctErrors) {
  const fs::path p = temp_file("err.flvr");
  std::ofstream(p, std::ios::binary) << "XXXX";
  try {
    flavr::load_checkpoint(p.string());
    FAIL();
  } catch (const flavr::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }

  auto net = Network<float>::build(micro_config(), 1);
  flavr::save_checkpoint(p.string(), flavr::snapshot(net));
  std::string bytes = slurp(p);
  bytes[4] = 2;  // version field
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  try {
    flavr::load_checkpoint(p.string());
    FAIL();
  } catch (const flavr::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  flavr::save_checkpoint(p.string(), flavr::snapshot(net));
  bytes = slurp(p);
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
  try {
    flavr::load_checkpoint(p.string());
    FAIL();
  } catch (const flavr::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }

  // loading into a structurally different network lists the offending names
  flavr::save_checkpoint(p.string(), flavr::snapshot(net));
  FlavrConfig other = micro_config();
  other.gating = false;
  auto net_other = Network<float>::build(other, 1);
  try {
    flavr::restore(net_other, flavr::load_checkpoint(p.string()));
    FAIL();
  } catch (const flavr::Error& e) {
    EXPECT_NE(std::string(e.what()).find("gate."), std::string::npos);
  }
  fs::remove(p);
}

TEST(Checkpoint, UnknownConfigKeyIsAnError) {
  Checkpoint ckpt;
  EXPECT_THROW(flavr::parse_config_blob("k=2\nwhatever=1\n", ckpt), flavr::IoError);
}

TEST(Checkpoint, MomentsRoundTripIntoAdamState) {
  auto net = Network<float>::build(micro_config(), 2);
  auto params = net.parameters();
  auto st = flavr::AdamState<float>::init(params);
  // one real step so the moments are nonzero
  for (auto& [n, p] : params) p->grad.fill(0.25f);
  flavr::adam_step(params, st, 1e-3, flavr::AdamConfig{});

  Checkpoint ckpt = flavr::snapshot(net);
  flavr::attach_moments(ckpt, params, st);
  const fs::path p = temp_file("moments.flvr");
  flavr::save_checkpoint(p.string(), ckpt);

  auto loaded = flavr::load_checkpoint(p.string());
  auto st2 = flavr::restore_moments<float>(loaded, params);
  EXPECT_EQ(st2.t, st.t);
  ASSERT_EQ(st2.m.size(), st.m.size());
  for (std::size_t i = 0; i < st.m.size(); ++i)
    for (std::int64_t j = 0; j < st.m[i].size(); ++j) {
      ASSERT_EQ(st2.m[i][j], st.m[i][j]);
      ASSERT_EQ(st2.v[i][j], st.v[i][j]);
    }
  fs::remove(p);
}
