#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cyclonet/dataset.hpp"
#include "cyclonet/graph.hpp"
#include "cyclonet/network.hpp"

namespace cyclonet {

// Mean squared difference of natural logs: (1/N) sum (log(yhat_i) - log(y_i))^2.
// Every element of both vectors must be strictly positive; nonpositive values
// are an error, never clamped.
double msle(std::span<const double> yhat, std::span<const double> y);

// Graph form of the same loss against constant targets, for gradient checks
// and any caller that wants d msle / d yhat.
template <typename T>
NodeId msle_node(Graph<T>& g, NodeId yhat, const TensorT<T>& y) {
  const NodeId logy = g.log(g.leaf(y, false));
  const NodeId diff = g.sub(g.log(yhat), logy);
  return g.mean(g.mul(diff, diff));
}

// coeff * sum of squared conv/fc weights (biases and batchnorm excluded).
double l2_penalty(const Model& model, double coeff);

// Bias-corrected Adam. Moments are stored in the parameter precision; the
// update arithmetic runs in double.
template <typename T>
struct AdamStateT {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<TensorT<T>> m;
  std::vector<TensorT<T>> v;

  // Sized lazily on the first adam_step call.
  bool initialized() const { return !m.empty(); }
};

using AdamState = AdamStateT<float>;

// One optimizer step over a parameter/gradient list. Shapes must agree
// pairwise and across calls.
template <typename T>
void adam_step(std::vector<TensorT<T>*> params, const std::vector<const TensorT<T>*>& grads,
               AdamStateT<T>& state);

extern template void adam_step<float>(std::vector<Tensor*>, const std::vector<const Tensor*>&,
                                      AdamStateT<float>&);
extern template void adam_step<double>(std::vector<Tensor64*>, const std::vector<const Tensor64*>&,
                                       AdamStateT<double>&);

struct TrainHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  int steps_per_epoch = 0;       // 0: ceil(train size / batch size)
  int early_stop_patience = 0;   // 0: off; otherwise stop after this many
                                 // epochs without a validation RMSE improvement
};

struct EpochStats {
  int epoch = 0;
  double train_msle = 0;
  double val_rmse = 0;  // NaN when no validation set is given
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

// Minimizes MSLE (computed on the log-speed head) plus the configured L2
// penalty with Adam over debiased sampled batches. Deterministic per seed.
// Leaves the model in eval mode. Aborts with NumericError naming the step if
// the loss goes non-finite.
TrainReport train(Model& model, const DatasetIndex& train_set, const DatasetIndex* val_set,
                  const SamplerConfig& sampler, const TrainHyper& hyper, std::uint64_t seed);

// CSV with columns epoch,train_msle,val_rmse,seconds.
void write_history_csv(const TrainReport& report, const std::filesystem::path& csv);

// RMSE of model predictions against labels, in knots.
double validation_rmse(const Model& model, const DatasetIndex& val_set);

}  // namespace cyclonet
