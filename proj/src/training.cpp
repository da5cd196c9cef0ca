#include "cyclonet/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "cyclonet/errors.hpp"
#include "cyclonet/eval.hpp"

namespace cyclonet {

double msle(std::span<const double> yhat, std::span<const double> y) {
  if (yhat.size() != y.size()) {
    throw ShapeError("msle: prediction count " + std::to_string(yhat.size()) +
                     " does not match label count " + std::to_string(y.size()));
  }
  if (yhat.empty()) throw DataError("msle: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    if (!(yhat[i] > 0.0)) {
      throw NumericError("msle: nonpositive prediction " + std::to_string(yhat[i]) +
                         " at index " + std::to_string(i));
    }
    if (!(y[i] > 0.0)) {
      throw NumericError("msle: nonpositive label " + std::to_string(y[i]) + " at index " +
                         std::to_string(i));
    }
    const double d = std::log(yhat[i]) - std::log(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(yhat.size());
}

double l2_penalty(const Model& model, double coeff) {
  if (coeff < 0.0) throw ConfigError("l2_penalty: coeff must be nonnegative");
  if (coeff == 0.0) return 0.0;
  double acc = 0.0;
  for (const Param& p : model.params) {
    if (!p.decay) continue;
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      const double w = p.value[i];
      acc += w * w;
    }
  }
  return coeff * acc;
}

template <typename T>
void adam_step(std::vector<TensorT<T>*> params, const std::vector<const TensorT<T>*>& grads,
               AdamStateT<T>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (!state.initialized()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const TensorT<T>* p : params) {
      state.m.push_back(TensorT<T>(p->shape()));
      state.v.push_back(TensorT<T>(p->shape()));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter list size changed across steps");
  }
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    TensorT<T>& p = *params[k];
    const TensorT<T>& g = *grads[k];
    require_same_shape("adam_step", p.shape(), g.shape());
    TensorT<T>& m = state.m[k];
    TensorT<T>& v = state.v[k];
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) -
                            state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

template void adam_step<float>(std::vector<Tensor*>, const std::vector<const Tensor*>&,
                               AdamStateT<float>&);
template void adam_step<double>(std::vector<Tensor64*>, const std::vector<const Tensor64*>&,
                                AdamStateT<double>&);

double validation_rmse(const Model& model, const DatasetIndex& val_set) {
  if (val_set.samples.empty()) throw DataError("validation_rmse: empty validation set");
  std::vector<Image> images;
  images.reserve(val_set.samples.size());
  std::vector<double> labels;
  labels.reserve(val_set.samples.size());
  for (const CycloneSample& s : val_set.samples) {
    images.push_back(s.image);
    labels.push_back(s.wind_speed);
  }
  const std::vector<double> preds = predict_images(model, images);
  return rmse(preds, labels);
}

TrainReport train(Model& model, const DatasetIndex& train_set, const DatasetIndex* val_set,
                  const SamplerConfig& sampler, const TrainHyper& hyper, std::uint64_t seed) {
  if (hyper.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (train_set.samples.empty()) throw DataError("train: empty training set");

  const int batch_size = static_cast<int>(train_set.by_speed.size());
  const int steps = hyper.steps_per_epoch > 0
                        ? hyper.steps_per_epoch
                        : static_cast<int>((train_set.samples.size() + batch_size - 1) /
                                           static_cast<std::size_t>(batch_size));

  const RngStream root(seed);
  RngStream sampler_rng = root.fork("sampler");
  RngStream dropout_rng = root.fork("dropout");

  AdamState adam;
  adam.learning_rate = hyper.learning_rate;
  adam.beta1 = hyper.beta1;
  adam.beta2 = hyper.beta2;
  adam.epsilon = hyper.epsilon;

  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.mode = Mode::Train;
    double loss_sum = 0.0;

    for (int step = 0; step < steps; ++step) {
      Batch batch = sample_batch(train_set, sampler, sampler_rng);
      Tensor input = batch_from_images(batch.images, model.config.input_size);

      Graph<float> g;
      const ForwardTrace trace = forward_trace(model, g, std::move(input), Mode::Train,
                                               &dropout_rng);
      // head emits log-speed, so squared error against log labels is exactly
      // the MSLE of the exponentiated prediction
      Tensor log_y({static_cast<int>(batch.speeds.size())});
      for (std::size_t i = 0; i < batch.speeds.size(); ++i) {
        log_y[static_cast<std::int64_t>(i)] =
            static_cast<float>(std::log(batch.speeds[i]));
      }
      const NodeId diff = g.sub(trace.head, g.leaf(std::move(log_y), false));
      NodeId loss = g.mean(g.mul(diff, diff));
      const double data_loss = g.value(loss)[0];

      const float l2 = static_cast<float>(model.config.l2_coeff);
      if (l2 > 0.0f) {
        NodeId penalty = -1;
        for (std::size_t k = 0; k < model.params.size(); ++k) {
          if (!model.params[k].decay) continue;
          const NodeId w = trace.param_nodes[k];
          const NodeId sq = g.sum(g.mul(w, w));
          penalty = penalty < 0 ? sq : g.add(penalty, sq);
        }
        loss = g.add(loss, g.scale_shift(penalty, l2, 0.0f));
      }
      if (!std::isfinite(g.value(loss)[0])) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step + 1));
      }
      g.backward(loss);

      std::vector<Tensor*> params;
      std::vector<const Tensor*> grads;
      for (std::size_t k = 0; k < model.params.size(); ++k) {
        if (!model.params[k].trainable) continue;
        params.push_back(&model.params[k].value);
        grads.push_back(&g.grad(trace.param_nodes[k]));
      }
      adam_step<float>(std::move(params), grads, adam);
      loss_sum += data_loss;
    }

    model.mode = Mode::Eval;
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_msle = loss_sum / steps;
    stats.val_rmse = val_set != nullptr ? validation_rmse(model, *val_set)
                                        : std::numeric_limits<double>::quiet_NaN();
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(stats);

    if (hyper.early_stop_patience > 0 && val_set != nullptr) {
      if (stats.val_rmse < best_val - 1e-12) {
        best_val = stats.val_rmse;
        stale_epochs = 0;
      } else if (++stale_epochs >= hyper.early_stop_patience) {
        break;
      }
    }
  }
  model.mode = Mode::Eval;
  return report;
}

void write_history_csv(const TrainReport& report, const std::filesystem::path& csv) {
  std::ofstream out(csv);
  if (!out) throw IoError(csv.string() + ": cannot open for writing");
  out << "epoch,train_msle,val_rmse,seconds\n";
  char line[160];
  for (const EpochStats& e : report.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.3f\n", e.epoch, e.train_msle, e.val_rmse,
                  e.seconds);
    out << line;
  }
  if (!out) throw IoError(csv.string() + ": write failed");
}

}  // namespace cyclonet
