// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line per criterion. Exit status is the number of failures.
//
// Sections:
//   1. gradient checks for every layer primitive and the loss
//   2. error-metric brute-force oracle sweep
//   3. intensity-scale taxonomy and expert training ranges
//   4. sampler and split properties
//   5. gated-mixture routing with stub experts
//   6. desk-scale end-to-end training (synthetic, 64x64, n=2000)
//   7. activation-heatmap checks, including the eye-focus soft check

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cyclonet/dataset.hpp"
#include "cyclonet/eval.hpp"
#include "cyclonet/explain.hpp"
#include "cyclonet/models.hpp"
#include "cyclonet/training.hpp"

using namespace cyclonet;

namespace {

int g_failures = 0;

void check(const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %s%s%s\n", pass ? "PASS" : "FAIL", name.c_str(),
              detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

template <typename T>
TensorT<T> random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0,
                         double hi = 1.0) {
  TensorT<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// values pairwise separated inside each 2x2 pooling window so finite
// differences never cross an argmax tie
template <typename T>
TensorT<T> random_pool_safe(std::vector<int> shape, RngStream& rng, double min_gap = 1e-3) {
  TensorT<T> t(shape);
  const int n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i + 1 < h; i += 2) {
        for (int j = 0; j + 1 < w; j += 2) {
          for (;;) {
            double v[4];
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            bool ok = true;
            for (int a = 0; a < 4 && ok; ++a) {
              for (int b = a + 1; b < 4; ++b) {
                if (std::abs(v[a] - v[b]) < min_gap) {
                  ok = false;
                  break;
                }
              }
            }
            if (!ok) continue;
            t.at(s, ch, i, j) = static_cast<T>(v[0]);
            t.at(s, ch, i, j + 1) = static_cast<T>(v[1]);
            t.at(s, ch, i + 1, j) = static_cast<T>(v[2]);
            t.at(s, ch, i + 1, j + 1) = static_cast<T>(v[3]);
            break;
          }
        }
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------- section 1

void gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const int seeds = 20;
  double worst = 0.0;
  std::string worst_site = "none";
  const auto track = [&](const char* site, double err) {
    if (err > worst) {
      worst = err;
      worst_site = site;
    }
  };

  for (int seed = 0; seed < seeds; ++seed) {
    RngStream rng(1000 + seed * 7919);
    const int n = 1 + static_cast<int>(rng.uniform_int(2));
    const int c = 1 + static_cast<int>(rng.uniform_int(3));
    const int o = 1 + static_cast<int>(rng.uniform_int(4));
    const int h = 4 + 2 * static_cast<int>(rng.uniform_int(2));
    const int w = 4 + 2 * static_cast<int>(rng.uniform_int(2));
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    const Padding pad = rng.bernoulli(0.5) ? Padding::Same : Padding::Valid;

    {  // conv2d over randomized shapes, strides and paddings
      const std::vector<Tensor64> inputs{random_tensor<double>({n, c, h, w}, rng),
                                         random_tensor<double>({o, c, 3, 3}, rng),
                                         random_tensor<double>({o}, rng)};
      const auto build = [stride, pad](Graph<double>& g, const std::vector<NodeId>& in) {
        return g.mean(g.mul(g.conv2d(in[0], in[1], in[2], stride, pad),
                            g.conv2d(in[0], in[1], in[2], stride, pad)));
      };
      track("conv2d", grad_check<double>(build, inputs, 1e-6).max_rel_error);
    }
    {  // maxpool2d
      const std::vector<Tensor64> inputs{random_pool_safe<double>({n, c, h, w}, rng)};
      const auto build = [](Graph<double>& g, const std::vector<NodeId>& in) {
        const NodeId out = g.maxpool2d(in[0]);
        return g.mean(g.mul(out, out));
      };
      track("maxpool2d", grad_check<double>(build, inputs, 1e-6).max_rel_error);
    }
    {  // batchnorm, train mode, gradient through batch statistics
      const std::vector<Tensor64> inputs{random_tensor<double>({2 + n, c, h / 2, w / 2}, rng),
                                         random_tensor<double>({c}, rng, 0.5, 1.5),
                                         random_tensor<double>({c}, rng)};
      const auto build = [c](Graph<double>& g, const std::vector<NodeId>& in) {
        Tensor64 rm = Tensor64::zeros({c}), rv = Tensor64::ones({c});
        const NodeId out = g.batchnorm(in[0], in[1], in[2], {&rm, &rv}, 1e-5, 0.1, Mode::Train);
        return g.mean(g.mul(out, out));
      };
      track("batchnorm", grad_check<double>(build, inputs, 1e-6).max_rel_error);
    }
    {  // dense
      const int f = 2 + static_cast<int>(rng.uniform_int(8));
      const int gdim = 1 + static_cast<int>(rng.uniform_int(4));
      const std::vector<Tensor64> inputs{random_tensor<double>({n, f}, rng),
                                         random_tensor<double>({f, gdim}, rng),
                                         random_tensor<double>({gdim}, rng)};
      const auto build = [](Graph<double>& g, const std::vector<NodeId>& in) {
        const NodeId out = g.dense(in[0], in[1], in[2]);
        return g.mean(g.mul(out, out));
      };
      track("dense", grad_check<double>(build, inputs, 1e-6).max_rel_error);
    }
    {  // relu (inputs kept away from the kink)
      Tensor64 x = random_tensor<double>({3, 5}, rng);
      for (std::int64_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) < 1e-3) x[i] += x[i] < 0 ? -1e-3 : 1e-3;
      }
      const auto build = [](Graph<double>& g, const std::vector<NodeId>& in) {
        return g.mean(g.mul(g.relu(in[0]), g.relu(in[0])));
      };
      track("relu", grad_check<double>(build, {x}, 1e-6).max_rel_error);
    }
    {  // dropout with a replayable mask
      const std::vector<Tensor64> inputs{random_tensor<double>({4, 4}, rng)};
      const std::uint64_t mask_seed = 5000 + seed;
      const auto build = [mask_seed](Graph<double>& g, const std::vector<NodeId>& in) {
        RngStream mask_rng(mask_seed);
        const NodeId out = g.dropout(in[0], 0.3, Mode::Train, &mask_rng);
        return g.mean(g.mul(out, out));
      };
      track("dropout", grad_check<double>(build, inputs, 1e-6).max_rel_error);
    }
    {  // loss: mean squared log difference against positive targets
      const Tensor64 y = random_tensor<double>({6}, rng, 10.0, 180.0);
      const std::vector<Tensor64> inputs{random_tensor<double>({6}, rng, 10.0, 180.0)};
      const auto build = [&y](Graph<double>& g, const std::vector<NodeId>& in) {
        return msle_node(g, in[0], y);
      };
      track("msle", grad_check<double>(build, inputs, 1e-7).max_rel_error);
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  check("gradient-suite",
        worst < 1e-4 && secs < 120.0,
        fmt("max rel err %.2e at %s over %d seeds x 7 primitives, %.1fs (budget 120s)", worst,
            worst_site.c_str(), seeds, secs));
}

// ---------------------------------------------------------------- section 2

void metric_suite() {
  RngStream rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(500);
    std::vector<double> yhat(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      yhat[i] = rng.uniform(1.0, 200.0);
      y[i] = rng.uniform(1.0, 200.0);
    }
    double sq = 0, ab = 0, df = 0, mp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sq += (yhat[i] - y[i]) * (yhat[i] - y[i]);
      ab += std::fabs(yhat[i] - y[i]);
      df += yhat[i] - y[i];
      mp += yhat[i];
    }
    const double b_rmse = std::sqrt(sq / n);
    const double b_mae = ab / n;
    const double b_bias = df / n;
    const double b_rel = std::sqrt(sq / (n - 1)) / (mp / n);
    const auto rel_err = [](double got, double want) {
      return std::fabs(got - want) / std::max({std::fabs(want), std::fabs(got), 1e-30});
    };
    worst = std::max(worst, rel_err(rmse(yhat, y), b_rmse));
    worst = std::max(worst, rel_err(mae(yhat, y), b_mae));
    worst = std::max(worst, std::fabs(bias(yhat, y) - b_bias));
    worst = std::max(worst, rel_err(relative_rmse(yhat, y), b_rel));
  }
  const std::vector<double> base{10.0, 10.0};
  const std::vector<double> pred{13.0, 6.0};  // residuals +3, -4
  const bool worked = std::fabs(rmse(pred, base) - 3.53553) < 1e-5 &&
                      std::fabs(mae(pred, base) - 3.5) < 1e-12 &&
                      std::fabs(bias(pred, base) + 0.5) < 1e-12 &&
                      std::fabs(relative_rmse(std::vector<double>{10.0, 20.0},
                                              std::vector<double>{13.0, 16.0}) -
                                0.33333) < 1e-5;
  check("metric-oracle-suite", worst < 1e-9 && worked,
        fmt("worst deviation %.2e over 1000 random vectors; worked examples %s", worst,
            worked ? "ok" : "WRONG"));
}

// ---------------------------------------------------------------- section 3

void taxonomy_suite() {
  const auto knot_category = [](int knot) {
    if (knot <= 33) return 1;
    if (knot <= 63) return 2;
    if (knot <= 82) return 3;
    if (knot <= 95) return 4;
    if (knot <= 112) return 5;
    if (knot <= 136) return 6;
    return 7;
  };
  bool all_knots = true;
  for (int knot = 1; knot <= 200; ++knot) {
    if (static_cast<int>(categorize(knot)) != knot_category(knot)) {
      all_knots = false;
      break;
    }
  }
  check("taxonomy-integer-knots", all_knots, "categorize matches the scale on [1,200]");

  const auto h2 = expert_range(Category::H2, 185.0, OverlapPolicy::OneThirdAdjacent);
  const auto ts = expert_range(Category::TS, 185.0, OverlapPolicy::OneThirdAdjacent);
  const bool ranges_ok = std::fabs(h2.first - (83.0 - 19.0 / 3.0)) < 1e-9 &&
                         std::fabs(h2.second - (96.0 + 17.0 / 3.0)) < 1e-9 &&
                         std::fabs(ts.first - (34.0 - 34.0 / 3.0)) < 1e-9 &&
                         std::fabs(ts.second - (64.0 + 19.0 / 3.0)) < 1e-9;
  check("taxonomy-overlap-ranges", ranges_ok,
        fmt("H2 [%.6f, %.6f) TS [%.6f, %.6f)", h2.first, h2.second, ts.first, ts.second));
}

// ---------------------------------------------------------------- section 4

CycloneSample plain_sample(const std::string& image_id, const std::string& storm_id,
                           double speed) {
  CycloneSample s;
  s.image_id = image_id;
  s.storm_id = storm_id;
  s.wind_speed = speed;
  s.image = Image({8, 8});
  return s;
}

void sampler_suite() {
  {  // one image per distinct speed, 1000 consecutive batches
    std::vector<CycloneSample> samples;
    RngStream mk(8);
    for (int s = 0; s < 12; ++s) {
      for (int i = 0; i < 4; ++i) {
        samples.push_back(plain_sample(fmt("i%d_%d", s, i), fmt("storm%d", s),
                                       15.0 + mk.uniform_int(170)));
      }
    }
    const DatasetIndex idx = DatasetIndex::from_samples(std::move(samples));
    const std::vector<double> speeds = idx.distinct_speeds();
    RngStream rng(4);
    bool composition_ok = true;
    for (int b = 0; b < 1000 && composition_ok; ++b) {
      const Batch batch = sample_batch(idx, SamplerConfig{}, rng);
      composition_ok = batch.speeds == speeds;
    }
    check("sampler-one-per-speed", composition_ok,
          "1000 consecutive batches hold each distinct speed exactly once");
  }
  {  // event uniformity on the 100:1 two-storm fixture
    std::vector<CycloneSample> samples;
    for (int i = 0; i < 100; ++i) samples.push_back(plain_sample(fmt("a%d", i), "stormA", 30.0));
    samples.push_back(plain_sample("b0", "stormB", 30.0));
    const DatasetIndex idx = DatasetIndex::from_samples(std::move(samples));
    SamplerConfig cfg;
    cfg.rotation_fraction = 0.0;
    RngStream rng(2024);
    int storm_b = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      if (sample_batch(idx, cfg, rng).image_ids[0] == "b0") ++storm_b;
    }
    const double expected = draws / 2.0;
    const double chi2 = 2.0 * (storm_b - expected) * (storm_b - expected) / expected;
    check("sampler-event-uniformity", chi2 < 6.635,
          fmt("storm B drawn %d/%d, chi-square %.3f < 6.635 (dof 1, level 0.01)", storm_b,
              draws, chi2));
  }
  {  // storm-disjoint split over 50 seeds
    std::vector<CycloneSample> samples;
    RngStream mk(9);
    for (int s = 0; s < 17; ++s) {
      const int count = 1 + static_cast<int>(mk.uniform_int(7));
      for (int i = 0; i < count; ++i) {
        samples.push_back(plain_sample(fmt("s%d_%d", s, i), fmt("storm%d", s),
                                       15.0 + mk.uniform_int(170)));
      }
    }
    const DatasetIndex idx = DatasetIndex::from_samples(std::move(samples));
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 50 && ok; ++seed) {
      const auto [train_set, val_set] = event_disjoint_split(idx, 0.25, seed);
      ok = train_set.size() + val_set.size() == idx.size();
      for (const auto& [id, rows] : val_set.by_storm) {
        if (train_set.by_storm.count(id)) ok = false;
      }
    }
    check("split-storm-disjoint", ok, "50 seeds: zero storm overlap and total coverage");
  }
}

// ---------------------------------------------------------------- section 5

NetworkConfig stub_config() {
  NetworkConfig cfg;
  cfg.input_size = 32;
  cfg.conv_channels = {2, 4, 4, 4, 4};
  cfg.fc_widths = {8, 1};
  cfg.dropout_rate = 0.0;
  cfg.l2_coeff = 0.0;
  return cfg;
}

Model const_output_model(double speed) {
  Model m = build_alexnet(stub_config(), 0);
  for (Param& p : m.params) {
    for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0f;
    if (p.name.ends_with("running_var")) {
      for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 1.0f;
    }
  }
  m.tensor("fc2.bias")[0] = static_cast<float>(std::log(speed));
  m.mode = Mode::Eval;
  return m;
}

void routing_suite() {
  const Image img = Image::full({32, 32}, 0.3f);
  RngStream rng(99);
  bool exact = true, categories_ok = true;
  for (int trial = 0; trial < 100 && exact; ++trial) {
    const double gate_speed = rng.uniform(15.0, 185.0);
    const double expert_speed = rng.uniform(15.0, 185.0);
    DistributedModel dm;
    dm.gate.members.push_back(const_output_model(gate_speed));
    for (const CategoryInfo& c : category_table()) {
      dm.experts.emplace(c.category, const_output_model(expert_speed));
    }
    const MoeDiagnostics d = moe_predict(dm, img);
    exact = d.expert_used && d.final_speed == (d.gate_speed + d.expert_speed) / 2.0;
    categories_ok = categories_ok && d.category == categorize(d.gate_speed);
  }
  check("moe-average-exact", exact && categories_ok,
        "final = (gate + expert)/2 bit-exactly for 100 random gate values");

  DistributedModel fallback_dm;
  fallback_dm.gate.members.push_back(const_output_model(20.0));
  fallback_dm.experts.emplace(Category::TS, const_output_model(50.0));
  const MoeDiagnostics d1 = moe_predict(fallback_dm, img);
  const MoeDiagnostics d2 = moe_predict(fallback_dm, img);
  check("moe-fallback-and-determinism",
        !d1.expert_used && d1.final_speed == d1.gate_speed && d1.category == Category::TD &&
            d2.final_speed == d1.final_speed && d2.category == d1.category,
        "missing expert falls back to the gate; repeat routing identical");
}

// ---------------------------------------------------------------- section 6

struct DeskScale {
  SynthDataset data;
  DatasetIndex train_set, test_set;
  std::map<std::string, VortexParams> truth;
  double baseline_rmse = 0;
  std::vector<double> single_rmse;
  std::vector<Model> single_models;
  GlobalEnsemble ensemble;
  double ensemble_rmse = 0;
  double distributed_rmse = 0;
};

NetworkConfig desk_config() {
  NetworkConfig cfg;
  cfg.input_size = 64;
  cfg.conv_channels = {4, 8, 16, 16, 16};
  cfg.fc_widths = {32, 1};
  cfg.dropout_rate = 0.2;
  cfg.l2_coeff = 1e-5;
  return cfg;
}

TrainHyper desk_hyper() {
  TrainHyper hyper;
  hyper.learning_rate = 3e-3;
  hyper.epochs = 15;
  return hyper;
}

void desk_scale_suite(DeskScale& desk) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig scfg;
  scfg.n = 2000;
  scfg.size = 64;
  scfg.seed = 1;
  desk.data = synth_generate(scfg);
  for (std::size_t i = 0; i < desk.data.index.samples.size(); ++i) {
    desk.truth[desk.data.index.samples[i].image_id] = desk.data.truth[i];
  }
  auto split = event_disjoint_split(desk.data.index, 0.2, 7);
  desk.train_set = std::move(split.first);
  desk.test_set = std::move(split.second);

  std::vector<double> test_y;
  for (const CycloneSample& s : desk.test_set.samples) test_y.push_back(s.wind_speed);
  const double mean_y = std::accumulate(test_y.begin(), test_y.end(), 0.0) / test_y.size();
  desk.baseline_rmse = rmse(std::vector<double>(test_y.size(), mean_y), test_y);
  std::fprintf(stderr, "desk-scale: %zu train / %zu test, baseline RMSE %.2f\n",
               desk.train_set.size(), desk.test_set.size(), desk.baseline_rmse);

  // (a) five independent single models, two at a time
  desk.single_rmse.resize(5);
  desk.single_models.resize(5);
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= 5) return;
      Model m = build_alexnet(desk_config(), 100 + static_cast<std::uint64_t>(i));
      train(m, desk.train_set, nullptr, SamplerConfig{}, desk_hyper(),
            100 + static_cast<std::uint64_t>(i));
      desk.single_rmse[static_cast<std::size_t>(i)] = validation_rmse(m, desk.test_set);
      desk.single_models[static_cast<std::size_t>(i)] = std::move(m);
      std::fprintf(stderr, "desk-scale: single seed %d test RMSE %.2f\n", i,
                   desk.single_rmse[static_cast<std::size_t>(i)]);
    }
  };
  {
    auto f1 = std::async(std::launch::async, worker);
    auto f2 = std::async(std::launch::async, worker);
    f1.get();
    f2.get();
  }
  int beat_baseline = 0;
  for (double r : desk.single_rmse) {
    if (r <= 0.7 * desk.baseline_rmse) ++beat_baseline;
  }
  check("desk-single-model", beat_baseline >= 4,
        fmt("%d/5 seeds reached RMSE <= 0.7 x baseline (%.2f); RMSEs %.1f %.1f %.1f %.1f %.1f",
            beat_baseline, 0.7 * desk.baseline_rmse, desk.single_rmse[0], desk.single_rmse[1],
            desk.single_rmse[2], desk.single_rmse[3], desk.single_rmse[4]));

  // (b) five-member bootstrap ensemble vs single-model median
  const EnsembleTrainResult ens = bootstrap_train_ensemble(
      desk.train_set, nullptr, 5, desk_config(), SamplerConfig{}, desk_hyper(), 500, 2);
  desk.ensemble = std::move(ens.ensemble);
  std::vector<Image> test_images;
  for (const CycloneSample& s : desk.test_set.samples) test_images.push_back(s.image);
  desk.ensemble_rmse = rmse(ensemble_predict(desk.ensemble, test_images), test_y);
  std::vector<double> sorted = desk.single_rmse;
  std::sort(sorted.begin(), sorted.end());
  const double median_single = sorted[2];
  check("desk-ensemble", desk.ensemble_rmse <= median_single + 0.5,
        fmt("ensemble RMSE %.2f vs single median %.2f + 0.5", desk.ensemble_rmse,
            median_single));

  // (c) distributed model: the ensemble gates per-category experts
  DistributedModel dm;
  dm.gate = desk.ensemble;
  dm.overlap_policy = OverlapPolicy::OneThirdAdjacent;
  dm.dataset_max_speed = desk.data.index.max_speed();
  dm.ranges = expert_ranges(dm.dataset_max_speed, dm.overlap_policy);
  ExpertTrainResult experts = train_experts(desk.train_set, nullptr, dm.ranges, desk_config(),
                                            SamplerConfig{}, desk_hyper(), 900, 2);
  dm.experts = std::move(experts.experts);
  const std::vector<MoeDiagnostics> diags = moe_predict_batch(dm, test_images);
  std::vector<double> moe_speeds;
  for (const MoeDiagnostics& d : diags) moe_speeds.push_back(d.final_speed);
  desk.distributed_rmse = rmse(moe_speeds, test_y);
  check("desk-distributed",
        std::fabs(desk.distributed_rmse - desk.ensemble_rmse) <= 2.0,
        fmt("distributed RMSE %.2f within 2 knots of global ensemble RMSE %.2f (%zu experts)",
            desk.distributed_rmse, desk.ensemble_rmse, dm.experts.size()));

  std::fprintf(stderr, "desk-scale: %.1fs total\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// ---------------------------------------------------------------- section 7

void heatmap_suite(const DeskScale& desk) {
  {  // constructed network: constant positive activation, hand map = all ones
    Model m = build_alexnet(stub_config(), 3);
    RngStream rng(12);
    for (Param& p : m.params) {
      if (p.name.starts_with("conv") || p.name.starts_with("bn")) {
        for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0f;
        if (p.name.ends_with("running_var")) {
          for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 1.0f;
        }
      }
      if (p.name == "fc1.weight" || p.name == "fc2.weight") {
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
          p.value[i] = static_cast<float>(rng.uniform(0.01, 0.1));  // positive head
        }
      }
      if (p.name == "fc1.bias" || p.name == "fc2.bias") {
        for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0f;
      }
    }
    Tensor& beta5 = m.tensor("bn5.beta");
    for (std::int64_t i = 0; i < beta5.size(); ++i) beta5[i] = 0.7f;
    m.mode = Mode::Eval;
    const Image img = Image::full({32, 32}, 0.4f);
    const Heatmap heat = grad_cam(m, img, 5);
    double worst = 0.0;
    for (std::int64_t p = 0; p < heat.values.size(); ++p) {
      worst = std::max(worst, std::fabs(static_cast<double>(heat.values[p]) - 1.0));
    }
    // zero head weights kill the map entirely
    m.tensor("fc2.weight") = Tensor::zeros({8, 1});
    const Heatmap dead = grad_cam(m, img, 5);
    double dead_worst = 0.0;
    for (std::int64_t p = 0; p < dead.values.size(); ++p) {
      dead_worst = std::max(dead_worst, std::fabs(static_cast<double>(dead.values[p])));
    }
    check("gradcam-constructed-network", worst < 1e-6 && dead_worst < 1e-6,
          fmt("uniform-activation map off by %.2e from hand value; zero-head map off by %.2e",
              worst, dead_worst));
  }
  {  // ensemble median bounded by memberwise extremes
    const EnsembleHeatmaps maps =
        ensemble_heatmap(desk.ensemble, desk.test_set.samples[0].image, 3);
    const Image raw_median = median_pixelwise([&] {
      std::vector<Image> vs;
      for (const Heatmap& h : maps.members) vs.push_back(h.values);
      return vs;
    }());
    bool bounded = true;
    for (std::int64_t p = 0; p < raw_median.size() && bounded; ++p) {
      float lo = maps.members[0].values[p], hi = lo;
      for (const Heatmap& h : maps.members) {
        lo = std::min(lo, h.values[p]);
        hi = std::max(hi, h.values[p]);
      }
      bounded = raw_median[p] >= lo && raw_median[p] <= hi;
    }
    check("gradcam-median-bounded", bounded,
          "pixelwise median lies within memberwise min/max");
  }
  {  // eye-focus soft check on high-speed test images
    std::vector<std::size_t> order(5);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return desk.single_rmse[a] < desk.single_rmse[b]; });
    const Model& model = desk.single_models[order[2]];  // median-quality model
    const double model_rmse = desk.single_rmse[order[2]];

    int hits = 0, total = 0;
    const double radius = 0.25 * 64.0;
    for (const CycloneSample& s : desk.test_set.samples) {
      if (s.wind_speed <= 96.0) continue;
      const VortexParams& p = desk.truth.at(s.image_id);
      const Heatmap h = grad_cam(model, s.image, 3);
      std::int64_t best = 0;
      for (std::int64_t i = 1; i < h.values.size(); ++i) {
        if (h.values[i] > h.values[best]) best = i;
      }
      const double row = static_cast<double>(best / 64);
      const double col = static_cast<double>(best % 64);
      if (std::hypot(row - p.eye_row, col - p.eye_col) <= radius) ++hits;
      ++total;
    }
    const double frac = total > 0 ? static_cast<double>(hits) / total : 0.0;
    check("gradcam-eye-focus",
          model_rmse < desk.baseline_rmse && total > 0 && frac >= 0.6,
          fmt("argmax within 25%% of width of the eye centroid for %d/%d = %.0f%% of "
              "high-speed images (model RMSE %.1f < baseline %.1f)",
              hits, total, 100.0 * frac, model_rmse, desk.baseline_rmse));
  }
}

}  // namespace

int main() {
  std::printf("acceptance suite\n================\n");
  gradient_suite();
  metric_suite();
  taxonomy_suite();
  sampler_suite();
  routing_suite();

  DeskScale desk;
  desk_scale_suite(desk);
  heatmap_suite(desk);

  std::printf(
      "[INFO] full-dataset results from the original study (test RMSE 9.03/9.3/9.5, the 13.62 "
      "benchmark, MAE/Bias table values, train/val RMSE ~4.65, gating scores 0.75/0.73/0.74) "
      "need the 70k-image satellite dataset and large compute; they are out of desk-scale "
      "reach by design. The evaluate pipeline computes every one of those metrics when that "
      "dataset is supplied.\n");
  std::printf("================\n%s (%d failure%s)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures;
}
