#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cyclonet/explain.hpp"
#include "cyclonet/imgops.hpp"
#include "cyclonet/pnm.hpp"

using namespace cyclonet;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.input_size = 32;
  cfg.conv_channels = {2, 4, 4, 4, 3};
  cfg.fc_widths = {8, 1};
  cfg.dropout_rate = 0.0;
  cfg.l2_coeff = 0.0;
  return cfg;
}

Image test_image(int size = 32, std::uint64_t seed = 5) {
  RngStream rng(seed);
  Image img({size, size});
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform());
  return img;
}

// Model whose head is exactly linear in the stage-5 activations: every fc
// weight is positive and fc biases are zero, so the hidden relu never clips.
Model positive_head_model(std::uint64_t seed) {
  Model m = build_alexnet(tiny_config(), seed);
  RngStream rng(seed + 1);
  for (const char* name : {"fc1.weight", "fc2.weight"}) {
    Tensor& w = m.tensor(name);
    for (std::int64_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(rng.uniform(0.01, 0.1));
    }
  }
  m.tensor("fc1.bias") = Tensor::zeros({8});
  m.tensor("fc2.bias") = Tensor::zeros({1});
  m.mode = Mode::Eval;
  return m;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Normalize, RangeRulesAndIdempotence) {
  Image zero({2, 2});
  const Image z = normalize_unit(zero);
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(z[i], 0.0f);  // all-zero stays all-zero

  const Image constant = normalize_unit(Image::full({2, 2}, 0.37f));
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(constant[i], 1.0f);

  Image mixed({2, 2}, {0.2f, 0.6f, 1.0f, 0.4f});
  const Image n1 = normalize_unit(mixed);
  EXPECT_FLOAT_EQ(n1[0], 0.0f);
  EXPECT_FLOAT_EQ(n1[2], 1.0f);
  const Image n2 = normalize_unit(n1);
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(n2[i], n1[i]);
}

TEST(GradCam, LinearHeadMatchesAlgebraicChannelWeights) {
  const Model m = positive_head_model(3);
  const Image img = test_image();

  // independent route: with a linear head, d(head)/d(activation) is the
  // matrix product fc1.weight * fc2.weight, no autodiff involved
  const Tensor& w1 = m.tensor("fc1.weight");  // [flat, 8]
  const Tensor& w2 = m.tensor("fc2.weight");  // [8, 1]
  const int flat = w1.dim(0);
  std::vector<double> coeff(static_cast<std::size_t>(flat), 0.0);
  for (int j = 0; j < flat; ++j) {
    for (int h = 0; h < 8; ++h) {
      coeff[static_cast<std::size_t>(j)] +=
          static_cast<double>(w1.at(j, h)) * static_cast<double>(w2.at(h, 0));
    }
  }

  Model& mm = const_cast<Model&>(m);
  Graph<float> g;
  const ForwardTrace trace = forward_trace(
      mm, g, batch_from_images(std::span<const Image>(&img, 1), 32), Mode::Eval, nullptr);
  const Tensor& acts = g.value(trace.stage_out[4]);  // [1, 3, 1, 1]
  const int channels = acts.dim(1), sh = acts.dim(2), sw = acts.dim(3);

  Image expected({sh, sw});
  for (int k = 0; k < channels; ++k) {
    double alpha = 0.0;
    for (int p = 0; p < sh * sw; ++p) alpha += coeff[static_cast<std::size_t>(k * sh * sw + p)];
    alpha /= sh * sw;
    for (int p = 0; p < sh * sw; ++p) {
      expected[p] += static_cast<float>(alpha) * acts[k * sh * sw + p];
    }
  }
  for (std::int64_t p = 0; p < expected.size(); ++p) expected[p] = std::max(expected[p], 0.0f);
  const Image expected_map = normalize_unit(bilinear_resize(expected, 32, 32));

  const Heatmap heat = grad_cam(m, img, 5);
  ASSERT_EQ(heat.values.shape(), expected_map.shape());
  for (std::int64_t p = 0; p < expected_map.size(); ++p) {
    EXPECT_NEAR(heat.values[p], expected_map[p], 1e-5) << "pixel " << p;
  }
}

TEST(GradCam, HeadGradientWrtActivationsMatchesFiniteDifferences) {
  const Model m = positive_head_model(4);
  // FD oracle over the head subgraph alone: activations enter as a leaf
  const Tensor w1f = m.tensor("fc1.weight");
  const Tensor w2f = m.tensor("fc2.weight");
  const Tensor64 w1 = w1f.cast<double>();
  const Tensor64 w2 = w2f.cast<double>();
  RngStream rng(6);
  Tensor64 acts({1, 3, 1, 1});
  for (int i = 0; i < 3; ++i) acts[i] = rng.uniform(0.1, 2.0);

  const auto build = [&](Graph<double>& g, const std::vector<NodeId>& in) {
    NodeId x = g.reshape(in[0], {1, 3});
    x = g.dense(x, g.leaf(w1), g.leaf(Tensor64::zeros({8})));
    x = g.relu(x);
    x = g.dense(x, g.leaf(w2), g.leaf(Tensor64::zeros({1})));
    return g.sum(x);
  };
  const auto report = grad_check<double>(build, {acts}, 1e-6);
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(GradCam, ZeroHeadWeightGivesAllZeroMap) {
  Model m = positive_head_model(3);
  m.tensor("fc2.weight") = Tensor::zeros({8, 1});
  const Heatmap heat = grad_cam(m, test_image(), 5);
  for (std::int64_t p = 0; p < heat.values.size(); ++p) {
    EXPECT_FLOAT_EQ(heat.values[p], 0.0f);
  }
}

TEST(GradCam, ConstantPositiveActivationGivesAllOnes) {
  // zeroed conv path with positive batchnorm shift: stage-5 activations are
  // a positive constant, so the weighted map is uniform and normalizes to 1
  Model m = positive_head_model(3);
  for (Param& p : m.params) {
    if (p.name.starts_with("conv") || p.name.starts_with("bn")) {
      for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0f;
      if (p.name.ends_with("running_var")) {
        for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 1.0f;
      }
    }
  }
  Tensor& beta5 = m.tensor("bn5.beta");
  for (std::int64_t i = 0; i < beta5.size(); ++i) beta5[i] = 0.8f;
  const Heatmap heat = grad_cam(m, test_image(), 5);
  for (std::int64_t p = 0; p < heat.values.size(); ++p) {
    EXPECT_FLOAT_EQ(heat.values[p], 1.0f);
  }
}

TEST(GradCam, InvalidLayerRejected) {
  const Model m = positive_head_model(3);
  EXPECT_THROW(grad_cam(m, test_image(), 0), ConfigError);
  EXPECT_THROW(grad_cam(m, test_image(), 6), ConfigError);
}

TEST(Median, LowerMiddleAndOrderInvariance) {
  const Image a = Image::full({2, 2}, 0.2f);
  const Image b = Image::full({2, 2}, 0.5f);
  const Image c = Image::full({2, 2}, 0.9f);
  const Image med3 = median_pixelwise({a, b, c});
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(med3[i], 0.5f);

  // even count: the lower of the two middle values
  const Image med2 = median_pixelwise({b, a});
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(med2[i], 0.2f);

  const Image forward = median_pixelwise({a, b, c});
  const Image reversed = median_pixelwise({c, b, a});
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(forward[i], reversed[i]);
}

TEST(Median, BoundedByMemberwiseExtremes) {
  RngStream rng(8);
  std::vector<Image> maps;
  for (int k = 0; k < 4; ++k) {
    Image m({6, 6});
    for (std::int64_t i = 0; i < m.size(); ++i) m[i] = static_cast<float>(rng.uniform());
    maps.push_back(std::move(m));
  }
  const Image med = median_pixelwise(maps);
  for (std::int64_t p = 0; p < med.size(); ++p) {
    float lo = maps[0][p], hi = maps[0][p];
    for (const Image& m : maps) {
      lo = std::min(lo, m[p]);
      hi = std::max(hi, m[p]);
    }
    EXPECT_GE(med[p], lo);
    EXPECT_LE(med[p], hi);
  }
}

TEST(EnsembleHeatmap, IdenticalMembersGiveTheSameMedian) {
  GlobalEnsemble ens;
  ens.members.push_back(positive_head_model(3));
  ens.members.push_back(positive_head_model(3));
  ens.members.push_back(positive_head_model(3));
  const Image img = test_image();
  const EnsembleHeatmaps result = ensemble_heatmap(ens, img, 5);
  ASSERT_EQ(result.members.size(), 3u);
  for (std::int64_t p = 0; p < result.median.values.size(); ++p) {
    EXPECT_EQ(result.median.values[p], result.members[0].values[p]);
  }
  // a single-member ensemble's median is that member
  GlobalEnsemble one;
  one.members.push_back(positive_head_model(7));
  const EnsembleHeatmaps single = ensemble_heatmap(one, img, 5);
  for (std::int64_t p = 0; p < single.median.values.size(); ++p) {
    EXPECT_EQ(single.median.values[p], single.members[0].values[p]);
  }
}

TEST(Overlay, ZeroHeatmapReproducesTheGrayscaleImage) {
  const auto dir = std::filesystem::temp_directory_path() / "cyclonet_overlay";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const Image img = test_image(16);
  Heatmap zero;
  zero.values = Image({16, 16});
  overlay_export(img, zero, dir / "zero");
  write_ppm8(img, img, img, dir / "gray.ppm");
  EXPECT_EQ(file_bytes(dir / "zero_overlay.ppm"), file_bytes(dir / "gray.ppm"));
  std::filesystem::remove_all(dir);
}

TEST(Overlay, CsvRoundTripAndGoldenBytes) {
  const auto dir = std::filesystem::temp_directory_path() / "cyclonet_overlay_golden";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  Heatmap heat;
  heat.values = Image({2, 2}, {0.0f, 1.0f, 0.5f, 0.25f});
  const Image img = Image::full({2, 2}, 0.5f);
  overlay_export(img, heat, dir / "fix");

  const Image back = read_heatmap_csv(dir / "fix_heatmap.csv");
  ASSERT_EQ(back.shape(), heat.values.shape());
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(back[i], heat.values[i], 1e-6);

  // hand-assembled 16-bit graymap: header then big-endian rounded values
  std::vector<unsigned char> expected{'P', '5', '\n', '2', ' ', '2', '\n',
                                      '6', '5', '5', '3', '5', '\n'};
  for (const unsigned v : {0u, 65535u, 32768u, 16384u}) {
    expected.push_back(static_cast<unsigned char>(v >> 8));
    expected.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  EXPECT_EQ(file_bytes(dir / "fix_heatmap.pgm"), expected);

  // byte-identical across runs
  overlay_export(img, heat, dir / "fix2");
  EXPECT_EQ(file_bytes(dir / "fix_heatmap.pgm"), file_bytes(dir / "fix2_heatmap.pgm"));
  EXPECT_EQ(file_bytes(dir / "fix_overlay.ppm"), file_bytes(dir / "fix2_overlay.ppm"));
  EXPECT_EQ(file_bytes(dir / "fix_heatmap.csv"), file_bytes(dir / "fix2_heatmap.csv"));
  std::filesystem::remove_all(dir);
}
