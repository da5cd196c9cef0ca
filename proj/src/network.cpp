#include "cyclonet/network.hpp"

#include <algorithm>
#include <cmath>

#include "cyclonet/errors.hpp"
#include "cyclonet/imgops.hpp"

namespace cyclonet {

namespace {

constexpr float kBnEps = 1e-5f;
constexpr float kBnMomentum = 0.1f;
constexpr int kStages = 5;
constexpr int kKernel = 3;
constexpr int kPredictChunk = 64;

Tensor he_uniform(std::vector<int> shape, int fan_in, RngStream rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(rng.uniform(-limit, limit));
  }
  return t;
}

}  // namespace

void validate(const NetworkConfig& config) {
  if (config.input_size <= 0 || config.input_size % 32 != 0) {
    throw ConfigError("network: input_size must be a positive multiple of 32, got " +
                      std::to_string(config.input_size));
  }
  for (int c : config.conv_channels) {
    if (c <= 0) throw ConfigError("network: conv channel widths must be positive");
  }
  if (config.fc_widths[0] <= 0) throw ConfigError("network: fc width must be positive");
  if (config.fc_widths[1] != 1) {
    throw ConfigError("network: output width must be 1, got " +
                      std::to_string(config.fc_widths[1]));
  }
  if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0) {
    throw ConfigError("network: dropout_rate must be in [0, 1)");
  }
  if (config.l2_coeff < 0.0) throw ConfigError("network: l2_coeff must be nonnegative");
}

int Model::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Tensor& Model::tensor(std::string_view name) {
  const int i = index_of(name);
  if (i < 0) throw Error("model: no parameter named '" + std::string(name) + "'");
  return params[static_cast<std::size_t>(i)].value;
}

const Tensor& Model::tensor(std::string_view name) const {
  const int i = index_of(name);
  if (i < 0) throw Error("model: no parameter named '" + std::string(name) + "'");
  return params[static_cast<std::size_t>(i)].value;
}

Model build_alexnet(const NetworkConfig& config, std::uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;
  m.mode = Mode::Train;
  const RngStream root(seed);

  int in_c = 1;
  for (int s = 0; s < kStages; ++s) {
    const int out_c = config.conv_channels[static_cast<std::size_t>(s)];
    const std::string conv = "conv" + std::to_string(s + 1);
    const std::string bn = "bn" + std::to_string(s + 1);
    m.params.push_back({conv + ".kernel",
                        he_uniform({out_c, in_c, kKernel, kKernel}, in_c * kKernel * kKernel,
                                   root.fork(conv + ".kernel")),
                        true, true});
    m.params.push_back({conv + ".bias", Tensor::zeros({out_c}), true, false});
    m.params.push_back({bn + ".gamma", Tensor::ones({out_c}), true, false});
    m.params.push_back({bn + ".beta", Tensor::zeros({out_c}), true, false});
    m.params.push_back({bn + ".running_mean", Tensor::zeros({out_c}), false, false});
    m.params.push_back({bn + ".running_var", Tensor::ones({out_c}), false, false});
    in_c = out_c;
  }
  const int spatial = config.input_size >> kStages;
  const int flat = in_c * spatial * spatial;
  m.params.push_back({"fc1.weight",
                      he_uniform({flat, config.fc_widths[0]}, flat, root.fork("fc1.weight")), true,
                      true});
  m.params.push_back({"fc1.bias", Tensor::zeros({config.fc_widths[0]}), true, false});
  m.params.push_back({"fc2.weight",
                      he_uniform({config.fc_widths[0], 1}, config.fc_widths[0],
                                 root.fork("fc2.weight")),
                      true, true});
  m.params.push_back({"fc2.bias", Tensor::zeros({1}), true, false});
  return m;
}

std::int64_t param_count(const Model& model) {
  std::int64_t n = 0;
  for (const Param& p : model.params) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

std::int64_t param_count_formula(const NetworkConfig& config) {
  std::int64_t n = 0;
  std::int64_t in_c = 1;
  for (int s = 0; s < kStages; ++s) {
    const std::int64_t out_c = config.conv_channels[static_cast<std::size_t>(s)];
    n += out_c * in_c * kKernel * kKernel + out_c;  // kernel + bias
    n += 2 * out_c;                                 // gamma + beta
    in_c = out_c;
  }
  const std::int64_t spatial = config.input_size >> kStages;
  const std::int64_t flat = in_c * spatial * spatial;
  n += flat * config.fc_widths[0] + config.fc_widths[0];
  n += static_cast<std::int64_t>(config.fc_widths[0]) + 1;
  return n;
}

ForwardTrace forward_trace(Model& model, Graph<float>& g, Tensor batch, Mode mode,
                           RngStream* dropout_rng) {
  require_rank("forward input", batch.shape(), 4);
  if (batch.dim(1) != 1) {
    throw ShapeError("forward: expected single-band input, got channel axis " +
                     std::to_string(batch.dim(1)));
  }
  if (batch.dim(2) != model.config.input_size || batch.dim(3) != model.config.input_size) {
    throw ShapeError("forward: spatial axes " + std::to_string(batch.dim(2)) + "x" +
                     std::to_string(batch.dim(3)) + " do not match configured input size " +
                     std::to_string(model.config.input_size));
  }
  const float rate = static_cast<float>(model.config.dropout_rate);
  if (mode == Mode::Train && rate > 0.0f && dropout_rng == nullptr) {
    throw ConfigError("forward: train mode with nonzero dropout needs an rng stream");
  }

  ForwardTrace trace;
  trace.param_nodes.assign(model.params.size(), -1);
  const auto node_of = [&](std::string_view name) -> NodeId {
    const int i = model.index_of(name);
    Param& p = model.params[static_cast<std::size_t>(i)];
    if (trace.param_nodes[static_cast<std::size_t>(i)] < 0) {
      trace.param_nodes[static_cast<std::size_t>(i)] = g.leaf(p.value, p.trainable);
    }
    return trace.param_nodes[static_cast<std::size_t>(i)];
  };

  const int n = batch.dim(0);
  trace.input = g.leaf(std::move(batch), false);
  NodeId x = trace.input;
  for (int s = 0; s < kStages; ++s) {
    const std::string conv = "conv" + std::to_string(s + 1);
    const std::string bn = "bn" + std::to_string(s + 1);
    x = g.conv2d(x, node_of(conv + ".kernel"), node_of(conv + ".bias"), 1, Padding::Same);
    x = g.maxpool2d(x);
    Graph<float>::RunningStats stats{&model.tensor(bn + ".running_mean"),
                                     &model.tensor(bn + ".running_var")};
    x = g.batchnorm(x, node_of(bn + ".gamma"), node_of(bn + ".beta"), stats, kBnEps, kBnMomentum,
                    mode);
    x = g.relu(x);
    trace.stage_out[static_cast<std::size_t>(s)] = x;
  }
  const int spatial = model.config.input_size >> kStages;
  const int flat = model.config.conv_channels[kStages - 1] * spatial * spatial;
  x = g.reshape(x, {n, flat});
  x = g.dense(x, node_of("fc1.weight"), node_of("fc1.bias"));
  x = g.relu(x);
  x = g.dropout(x, rate, mode, dropout_rng);
  x = g.dense(x, node_of("fc2.weight"), node_of("fc2.bias"));
  trace.head = g.reshape(x, {n});
  return trace;
}

std::vector<double> predict(const Model& model, const Tensor& batch) {
  // Eval mode only reads the running statistics, so the model is not mutated.
  Model& m = const_cast<Model&>(model);
  Graph<float> g;
  const ForwardTrace trace = forward_trace(m, g, batch, Mode::Eval, nullptr);
  const Tensor& head = g.value(trace.head);
  std::vector<double> speeds(static_cast<std::size_t>(head.size()));
  for (std::int64_t i = 0; i < head.size(); ++i) {
    speeds[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(head[i]));
  }
  return speeds;
}

Tensor batch_from_images(std::span<const Image> images, int input_size) {
  if (images.empty()) throw DataError("batch_from_images: empty image list");
  const int n = static_cast<int>(images.size());
  Tensor batch({n, 1, input_size, input_size});
  const std::int64_t plane = static_cast<std::int64_t>(input_size) * input_size;
  for (int i = 0; i < n; ++i) {
    const Image resized = bilinear_resize(images[static_cast<std::size_t>(i)], input_size,
                                          input_size);
    std::copy(resized.data(), resized.data() + plane, batch.data() + i * plane);
  }
  return batch;
}

std::vector<double> predict_images(const Model& model, std::span<const Image> images) {
  std::vector<double> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kPredictChunk) {
    const std::size_t count = std::min<std::size_t>(kPredictChunk, images.size() - start);
    const Tensor batch =
        batch_from_images(images.subspan(start, count), model.config.input_size);
    const std::vector<double> speeds = predict(model, batch);
    out.insert(out.end(), speeds.begin(), speeds.end());
  }
  return out;
}

}  // namespace cyclonet
