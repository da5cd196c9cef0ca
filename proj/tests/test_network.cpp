#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cyclonet/checkpoint.hpp"
#include "cyclonet/network.hpp"
#include "cyclonet/rng.hpp"

using namespace cyclonet;

namespace {

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.input_size = 64;
  cfg.conv_channels = {4, 8, 16, 16, 16};
  cfg.fc_widths = {32, 1};
  cfg.dropout_rate = 0.5;
  cfg.l2_coeff = 0.0;
  return cfg;
}

Tensor random_batch(int n, int size, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor batch({n, 1, size, size});
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    batch[i] = static_cast<float>(rng.uniform());
  }
  return batch;
}

bool params_bitwise_equal(const Model& a, const Model& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name) return false;
    if (a.params[i].value.shape() != b.params[i].value.shape()) return false;
    if (std::memcmp(a.params[i].value.data(), b.params[i].value.data(),
                    sizeof(float) * static_cast<std::size_t>(a.params[i].value.size())) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(NetworkConfig, ValidationRejectsBadShapes) {
  NetworkConfig cfg = small_config();
  cfg.input_size = 66;  // not divisible by 32
  EXPECT_THROW(build_alexnet(cfg, 1), ConfigError);
  cfg = small_config();
  cfg.fc_widths = {32, 2};
  EXPECT_THROW(build_alexnet(cfg, 1), ConfigError);
  cfg = small_config();
  cfg.conv_channels[2] = 0;
  EXPECT_THROW(build_alexnet(cfg, 1), ConfigError);
  cfg = small_config();
  cfg.dropout_rate = 1.0;
  EXPECT_THROW(build_alexnet(cfg, 1), ConfigError);
}

TEST(Network, ReferenceConfigLandsNearFiveMillionParameters) {
  const NetworkConfig cfg;  // reference defaults: 352px, [64,128,192,192,128], fc 256
  const Model m = build_alexnet(cfg, 7);
  const std::int64_t count = param_count(m);
  EXPECT_EQ(count, 4816001);  // closed-form shape arithmetic over the config
  EXPECT_GE(count, 4'500'000);
  EXPECT_LE(count, 5'500'000);
  EXPECT_EQ(count, param_count_formula(cfg));
}

TEST(Network, SmallConfigParamCountMatchesHandArithmetic) {
  const Model m = build_alexnet(small_config(), 7);
  // conv stages: 40+8, 296+16, 1168+32, 2320+32, 2320+32
  // fc: 64*32+32 = 2080, 32+1 = 33
  EXPECT_EQ(param_count(m), 8377);
  EXPECT_EQ(param_count_formula(small_config()), 8377);
}

TEST(Network, ParamCountFormulaMatchesRuntimeForRandomConfigs) {
  RngStream rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkConfig cfg;
    cfg.input_size = 32 * (1 + static_cast<int>(rng.uniform_int(4)));
    for (auto& c : cfg.conv_channels) c = 1 + static_cast<int>(rng.uniform_int(12));
    cfg.fc_widths = {1 + static_cast<int>(rng.uniform_int(40)), 1};
    const Model m = build_alexnet(cfg, trial);
    EXPECT_EQ(param_count(m), param_count_formula(cfg));
  }
}

TEST(Network, DenseOnlyParameterListCountsWeightsPlusBias) {
  Model m;
  m.params.push_back({"fc.weight", Tensor::zeros({10, 1}), true, true});
  m.params.push_back({"fc.bias", Tensor::zeros({1}), true, false});
  m.params.push_back({"fc.running_stat", Tensor::zeros({4}), false, false});
  EXPECT_EQ(param_count(m), 11);
}

TEST(Network, SameSeedBuildsBitwiseIdenticalParameters) {
  const Model a = build_alexnet(small_config(), 1234);
  const Model b = build_alexnet(small_config(), 1234);
  const Model c = build_alexnet(small_config(), 1235);
  EXPECT_TRUE(params_bitwise_equal(a, b));
  EXPECT_FALSE(params_bitwise_equal(a, c));
}

TEST(Network, PredictionsAreStrictlyPositiveAndDeterministic) {
  Model m = build_alexnet(small_config(), 5);
  m.mode = Mode::Eval;
  Tensor batch = random_batch(3, 64, 11);
  // duplicate sample 0 into slot 2
  std::memcpy(batch.data() + 2 * 64 * 64, batch.data(), sizeof(float) * 64 * 64);
  const std::vector<double> p1 = predict(m, batch);
  const std::vector<double> p2 = predict(m, batch);
  ASSERT_EQ(p1.size(), 3u);
  for (double v : p1) EXPECT_GT(v, 0.0);
  EXPECT_EQ(p1[0], p1[2]);  // identical inputs in one batch agree exactly
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], p2[i]);  // bitwise repeatable
}

TEST(Network, StagesHalveSpatialExtent) {
  Model m = build_alexnet(small_config(), 5);
  Graph<float> g;
  const ForwardTrace trace = forward_trace(m, g, random_batch(2, 64, 3), Mode::Eval, nullptr);
  int expect = 64;
  for (int s = 0; s < 5; ++s) {
    expect /= 2;
    const Tensor& out = g.value(trace.stage_out[static_cast<std::size_t>(s)]);
    EXPECT_EQ(out.dim(2), expect);
    EXPECT_EQ(out.dim(3), expect);
    EXPECT_EQ(out.dim(1), small_config().conv_channels[static_cast<std::size_t>(s)]);
  }
  EXPECT_EQ(g.value(trace.head).shape(), (std::vector<int>{2}));
}

TEST(Network, WrongSpatialSizeRejected) {
  Model m = build_alexnet(small_config(), 5);
  EXPECT_THROW(predict(m, random_batch(1, 32, 3)), ShapeError);
}

TEST(Checkpoint, RoundTripIsBitwiseExact) {
  const auto dir = std::filesystem::temp_directory_path() / "cyclonet_ckpt_roundtrip";
  std::filesystem::remove_all(dir);

  Model m = build_alexnet(small_config(), 42);
  // give running stats non-default values so the round trip covers them
  m.tensor("bn3.running_mean")[2] = 0.75f;
  m.tensor("bn3.running_var")[2] = 1.5f;
  m.mode = Mode::Eval;
  save_checkpoint(m, dir);
  const Model loaded = load_checkpoint(dir);
  EXPECT_TRUE(params_bitwise_equal(m, loaded));
  EXPECT_EQ(loaded.mode, Mode::Eval);

  const Tensor batch = random_batch(2, 64, 17);
  const std::vector<double> before = predict(m, batch);
  const std::vector<double> after = predict(loaded, batch);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptedBlobIsRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "cyclonet_ckpt_corrupt";
  std::filesystem::remove_all(dir);
  save_checkpoint(build_alexnet(small_config(), 42), dir);

  // truncate the blob
  const auto blob = dir / "weights.bin";
  const auto size = std::filesystem::file_size(blob);
  std::filesystem::resize_file(blob, size - 8);
  EXPECT_THROW(load_checkpoint(dir), IoError);

  // flip one byte, keeping the length
  save_checkpoint(build_alexnet(small_config(), 42), dir);
  {
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    char byte = 0x5A;
    f.write(&byte, 1);
  }
  EXPECT_THROW(load_checkpoint(dir), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, UnknownVersionIsRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "cyclonet_ckpt_version";
  std::filesystem::remove_all(dir);
  save_checkpoint(build_alexnet(small_config(), 42), dir);
  // bump the version field in place
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 19, "\"format_version\": 9");
  std::ofstream(dir / "manifest.json") << text;
  EXPECT_THROW(load_checkpoint(dir), IoError);
  std::filesystem::remove_all(dir);
}
