#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cyclonet/dataset.hpp"
#include "cyclonet/network.hpp"
#include "cyclonet/taxonomy.hpp"
#include "cyclonet/training.hpp"

namespace cyclonet {

// Bagged set of networks trained on storm-level bootstrap subsets; doubles
// as the gating function of the distributed model.
struct GlobalEnsemble {
  std::vector<Model> members;
  std::vector<std::uint64_t> member_seeds;
};

// Storm-level bootstrap: draws as many storms as the index holds, with
// replacement, keeps the distinct ones, then tops the subset up with one
// uniformly chosen storm per missing wind speed so every subset covers the
// full training speed set.
DatasetIndex bootstrap_subset(const DatasetIndex& train, RngStream& rng);

struct EnsembleTrainResult {
  GlobalEnsemble ensemble;
  std::vector<TrainReport> histories;
};

// Trains `member_count` members independently on bootstrap subsets with
// seeds derived from (seed, member index). `jobs` bounds concurrent member
// trainings; results are independent of it. Per-member failures propagate
// with the member index in the message.
EnsembleTrainResult bootstrap_train_ensemble(const DatasetIndex& train, const DatasetIndex* val,
                                             int member_count, const NetworkConfig& net,
                                             const SamplerConfig& sampler, const TrainHyper& hyper,
                                             std::uint64_t seed, int jobs = 1);

// Arithmetic mean of member predictions in knots, fixed member-index
// summation order.
std::vector<double> ensemble_predict(const GlobalEnsemble& ensemble,
                                     std::span<const Image> images);

// Gate plus per-category experts. Categories whose training range held no
// samples have no expert; prediction falls back to the gate alone there.
struct DistributedModel {
  GlobalEnsemble gate;
  std::map<Category, Model> experts;
  OverlapPolicy overlap_policy = OverlapPolicy::OneThirdAdjacent;
  std::map<Category, std::pair<double, double>> ranges;
  double dataset_max_speed = 185.0;
};

struct ExpertTrainResult {
  std::map<Category, Model> experts;
  std::map<Category, TrainReport> histories;
  std::vector<std::string> warnings;  // categories skipped for lack of samples
};

// Trains one expert per category on the sub-index of samples whose true
// speed lies in that category's range, using the same debiased sampler
// restricted to the sub-index.
ExpertTrainResult train_experts(const DatasetIndex& train, const DatasetIndex* val,
                                const std::map<Category, std::pair<double, double>>& ranges,
                                const NetworkConfig& net, const SamplerConfig& sampler,
                                const TrainHyper& hyper, std::uint64_t seed, int jobs = 1);

std::map<Category, std::pair<double, double>> expert_ranges(double dataset_max_speed,
                                                            OverlapPolicy policy);

struct MoeDiagnostics {
  double gate_speed = 0;
  Category category = Category::TD;
  bool expert_used = false;
  double expert_speed = 0;  // meaningful only when expert_used
  double final_speed = 0;
};

// Single-pass routing: the gate speed picks the category, the category's
// expert (if any) predicts, and the final speed is the plain average of the
// two. No re-routing on the expert's output.
MoeDiagnostics moe_predict(const DistributedModel& dm, const Image& image);

// Batched variant: one gate pass over all images, then one pass per expert
// over the images routed to it.
std::vector<MoeDiagnostics> moe_predict_batch(const DistributedModel& dm,
                                              std::span<const Image> images);

// Ensemble checkpoints: a directory of member checkpoints plus
// ensemble.json (member list and seeds). Distributed checkpoints add the
// gate directory, expert directories, overlap policy and category ranges.
void save_ensemble(const GlobalEnsemble& ensemble, const std::filesystem::path& dir);
GlobalEnsemble load_ensemble(const std::filesystem::path& dir);
void save_distributed(const DistributedModel& dm, const std::filesystem::path& dir);
DistributedModel load_distributed(const std::filesystem::path& dir);

enum class CheckpointKind { Model, Ensemble, Distributed };
CheckpointKind detect_checkpoint(const std::filesystem::path& dir);

}  // namespace cyclonet
