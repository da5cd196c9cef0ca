#include "cyclonet/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "cyclonet/checkpoint.hpp"
#include "cyclonet/errors.hpp"

namespace cyclonet {

namespace {

using json = nlohmann::json;

// Runs fn(0..n-1) on up to `jobs` threads. The first exception, if any, is
// rethrown after all tasks finish; task index order of side effects is
// caller-managed (each task writes its own slot).
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string policy_name(OverlapPolicy policy) {
  return policy == OverlapPolicy::OneThirdAdjacent ? "third" : "none";
}

OverlapPolicy policy_from_name(const std::string& name) {
  if (name == "third") return OverlapPolicy::OneThirdAdjacent;
  if (name == "none") return OverlapPolicy::None;
  throw ConfigError("unknown overlap policy '" + name + "'");
}

}  // namespace

DatasetIndex bootstrap_subset(const DatasetIndex& train_set, RngStream& rng) {
  if (train_set.by_storm.empty()) throw DataError("bootstrap_subset: empty training index");
  std::vector<std::string> storms;
  storms.reserve(train_set.by_storm.size());
  for (const auto& [id, rows] : train_set.by_storm) storms.push_back(id);

  std::set<std::string> chosen;
  for (std::size_t i = 0; i < storms.size(); ++i) {
    chosen.insert(storms[rng.uniform_int(storms.size())]);
  }

  // top up: every wind speed of the full index must appear in the subset
  std::set<double> covered;
  for (const std::string& id : chosen) {
    for (int row : train_set.by_storm.at(id)) {
      covered.insert(train_set.samples[static_cast<std::size_t>(row)].wind_speed);
    }
  }
  for (const auto& [speed, speed_storms] : train_set.by_speed) {
    if (covered.count(speed)) continue;
    std::vector<std::string> candidates;
    candidates.reserve(speed_storms.size());
    for (const auto& [id, rows] : speed_storms) candidates.push_back(id);
    const std::string& pick = candidates[rng.uniform_int(candidates.size())];
    chosen.insert(pick);
    for (int row : train_set.by_storm.at(pick)) {
      covered.insert(train_set.samples[static_cast<std::size_t>(row)].wind_speed);
    }
  }
  return train_set.filter_storms({chosen.begin(), chosen.end()});
}

EnsembleTrainResult bootstrap_train_ensemble(const DatasetIndex& train_set, const DatasetIndex* val,
                                             int member_count, const NetworkConfig& net,
                                             const SamplerConfig& sampler, const TrainHyper& hyper,
                                             std::uint64_t seed, int jobs) {
  if (member_count < 1) throw ConfigError("bootstrap_train_ensemble: member count must be >= 1");
  EnsembleTrainResult result;
  result.ensemble.members.resize(static_cast<std::size_t>(member_count));
  result.ensemble.member_seeds.resize(static_cast<std::size_t>(member_count));
  result.histories.resize(static_cast<std::size_t>(member_count));

  const RngStream root = RngStream(seed).fork("ensemble");
  parallel_for(member_count, jobs, [&](int i) {
    try {
      RngStream member_rng = root.fork(static_cast<std::uint64_t>(i));
      const std::uint64_t member_seed = member_rng.next_u64();
      RngStream subset_rng = member_rng.fork("bootstrap");
      const DatasetIndex subset = bootstrap_subset(train_set, subset_rng);
      Model model = build_alexnet(net, member_seed);
      result.histories[static_cast<std::size_t>(i)] =
          train(model, subset, val, sampler, hyper, member_seed);
      result.ensemble.members[static_cast<std::size_t>(i)] = std::move(model);
      result.ensemble.member_seeds[static_cast<std::size_t>(i)] = member_seed;
    } catch (const Error& e) {
      throw Error("ensemble member " + std::to_string(i) + ": " + e.what());
    }
  });
  return result;
}

std::vector<double> ensemble_predict(const GlobalEnsemble& ensemble,
                                     std::span<const Image> images) {
  if (ensemble.members.empty()) throw DataError("ensemble_predict: empty ensemble");
  std::vector<double> sum(images.size(), 0.0);
  for (const Model& member : ensemble.members) {
    const std::vector<double> preds = predict_images(member, images);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += preds[i];
  }
  const double inv = 1.0 / static_cast<double>(ensemble.members.size());
  for (double& v : sum) v *= inv;
  return sum;
}

std::map<Category, std::pair<double, double>> expert_ranges(double dataset_max_speed,
                                                            OverlapPolicy policy) {
  std::map<Category, std::pair<double, double>> ranges;
  for (const CategoryInfo& c : category_table()) {
    ranges[c.category] = expert_range(c.category, dataset_max_speed, policy);
  }
  return ranges;
}

ExpertTrainResult train_experts(const DatasetIndex& train_set, const DatasetIndex* val,
                                const std::map<Category, std::pair<double, double>>& ranges,
                                const NetworkConfig& net, const SamplerConfig& sampler,
                                const TrainHyper& hyper, std::uint64_t seed, int jobs) {
  std::vector<std::pair<Category, DatasetIndex>> tasks;
  ExpertTrainResult result;
  for (const auto& [category, range] : ranges) {
    DatasetIndex sub = train_set.filter_speed_range(range.first, range.second);
    if (sub.samples.empty()) {
      result.warnings.push_back(std::string("no training samples in range of ") +
                                info(category).code + ", expert skipped");
      continue;
    }
    tasks.emplace_back(category, std::move(sub));
  }

  std::vector<Model> trained(tasks.size());
  std::vector<TrainReport> histories(tasks.size());
  const RngStream root = RngStream(seed).fork("experts");
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Category category = tasks[static_cast<std::size_t>(i)].first;
    try {
      const std::uint64_t expert_seed =
          root.fork(static_cast<std::uint64_t>(static_cast<int>(category))).next_u64();
      Model model = build_alexnet(net, expert_seed);
      histories[static_cast<std::size_t>(i)] = train(
          model, tasks[static_cast<std::size_t>(i)].second, val, sampler, hyper, expert_seed);
      trained[static_cast<std::size_t>(i)] = std::move(model);
    } catch (const Error& e) {
      throw Error(std::string("expert ") + info(category).code + ": " + e.what());
    }
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    result.experts.emplace(tasks[i].first, std::move(trained[i]));
    result.histories.emplace(tasks[i].first, std::move(histories[i]));
  }
  return result;
}

MoeDiagnostics moe_predict(const DistributedModel& dm, const Image& image) {
  const std::vector<MoeDiagnostics> out = moe_predict_batch(dm, std::span<const Image>(&image, 1));
  return out.front();
}

std::vector<MoeDiagnostics> moe_predict_batch(const DistributedModel& dm,
                                              std::span<const Image> images) {
  if (dm.gate.members.empty()) throw DataError("moe_predict: empty gate ensemble");
  const std::vector<double> gate_speeds = ensemble_predict(dm.gate, images);

  std::vector<MoeDiagnostics> out(images.size());
  std::map<Category, std::vector<std::size_t>> routed;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out[i].gate_speed = gate_speeds[i];
    out[i].category = categorize(gate_speeds[i]);
    out[i].final_speed = gate_speeds[i];  // fallback until an expert speaks
    if (dm.experts.count(out[i].category)) routed[out[i].category].push_back(i);
  }
  for (const auto& [category, rows] : routed) {
    std::vector<Image> subset;
    subset.reserve(rows.size());
    for (std::size_t i : rows) subset.push_back(images[i]);
    const std::vector<double> expert_speeds =
        predict_images(dm.experts.at(category), subset);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      MoeDiagnostics& d = out[rows[k]];
      d.expert_used = true;
      d.expert_speed = expert_speeds[k];
      d.final_speed = (d.gate_speed + d.expert_speed) / 2.0;
    }
  }
  return out;
}

void save_ensemble(const GlobalEnsemble& ensemble, const std::filesystem::path& dir) {
  if (ensemble.members.empty()) throw DataError("save_ensemble: empty ensemble");
  std::filesystem::create_directories(dir);
  json members = json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "member_%03zu", i);
    save_checkpoint(ensemble.members[i], dir / name);
    members.push_back(json{{"dir", name}, {"seed", ensemble.member_seeds.size() > i
                                                        ? ensemble.member_seeds[i]
                                                        : 0}});
  }
  const json manifest{{"format_version", 1}, {"kind", "ensemble"}, {"members", members}};
  std::ofstream out(dir / "ensemble.json");
  if (!out) throw IoError((dir / "ensemble.json").string() + ": cannot open for writing");
  out << manifest.dump(2) << '\n';
}

GlobalEnsemble load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw IoError((dir / "ensemble.json").string() + ": cannot open");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError((dir / "ensemble.json").string() + ": invalid JSON: " + e.what());
  }
  if (manifest.value("kind", "") != "ensemble") {
    throw IoError((dir / "ensemble.json").string() + ": not an ensemble checkpoint");
  }
  GlobalEnsemble ensemble;
  for (const json& mj : manifest.at("members")) {
    ensemble.members.push_back(load_checkpoint(dir / mj.at("dir").get<std::string>()));
    ensemble.member_seeds.push_back(mj.value("seed", std::uint64_t{0}));
  }
  if (ensemble.members.empty()) {
    throw IoError((dir / "ensemble.json").string() + ": no members listed");
  }
  return ensemble;
}

void save_distributed(const DistributedModel& dm, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_ensemble(dm.gate, dir / "gate");
  json experts = json::array();
  for (const auto& [category, model] : dm.experts) {
    const std::string name = std::string("expert_") + info(category).code;
    save_checkpoint(model, dir / name);
    const auto range = dm.ranges.count(category)
                           ? dm.ranges.at(category)
                           : expert_range(category, dm.dataset_max_speed, dm.overlap_policy);
    experts.push_back(json{{"category", info(category).code},
                           {"lo", range.first},
                           {"hi", std::isinf(range.second) ? -1.0 : range.second},
                           {"dir", name}});
  }
  const json manifest{{"format_version", 1},
                      {"kind", "distributed"},
                      {"overlap_policy", policy_name(dm.overlap_policy)},
                      {"dataset_max_speed", dm.dataset_max_speed},
                      {"gate", "gate"},
                      {"experts", experts}};
  std::ofstream out(dir / "distributed.json");
  if (!out) throw IoError((dir / "distributed.json").string() + ": cannot open for writing");
  out << manifest.dump(2) << '\n';
}

DistributedModel load_distributed(const std::filesystem::path& dir) {
  std::ifstream in(dir / "distributed.json");
  if (!in) throw IoError((dir / "distributed.json").string() + ": cannot open");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError((dir / "distributed.json").string() + ": invalid JSON: " + e.what());
  }
  if (manifest.value("kind", "") != "distributed") {
    throw IoError((dir / "distributed.json").string() + ": not a distributed checkpoint");
  }
  DistributedModel dm;
  dm.overlap_policy = policy_from_name(manifest.value("overlap_policy", "third"));
  dm.dataset_max_speed = manifest.value("dataset_max_speed", 185.0);
  dm.gate = load_ensemble(dir / manifest.value("gate", "gate"));
  for (const json& ej : manifest.at("experts")) {
    const Category category = category_from_code(ej.at("category").get<std::string>());
    dm.experts.emplace(category, load_checkpoint(dir / ej.at("dir").get<std::string>()));
    const double hi = ej.at("hi").get<double>();
    dm.ranges[category] = {ej.at("lo").get<double>(),
                           hi < 0 ? std::numeric_limits<double>::infinity() : hi};
  }
  return dm;
}

CheckpointKind detect_checkpoint(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "distributed.json")) return CheckpointKind::Distributed;
  if (std::filesystem::exists(dir / "ensemble.json")) return CheckpointKind::Ensemble;
  if (std::filesystem::exists(dir / "manifest.json")) return CheckpointKind::Model;
  throw IoError(dir.string() + ": no checkpoint manifest found");
}

}  // namespace cyclonet
