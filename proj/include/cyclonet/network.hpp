#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyclonet/graph.hpp"
#include "cyclonet/rng.hpp"
#include "cyclonet/tensor.hpp"

namespace cyclonet {

// Declarative shape of the regression network: five conv stages
// (3x3 conv -> 2x2 maxpool -> batchnorm -> relu), then two fully connected
// layers. The head emits log wind speed; predictions are exponentiated.
struct NetworkConfig {
  int input_size = 352;
  std::array<int, 5> conv_channels{64, 128, 192, 192, 128};
  std::array<int, 2> fc_widths{256, 1};
  double dropout_rate = 0.5;
  double l2_coeff = 1e-4;
};

// Throws ConfigError unless input_size is a positive multiple of 32, all
// widths are positive, the output width is 1, and dropout_rate is in [0,1).
void validate(const NetworkConfig& config);

struct Param {
  std::string name;
  Tensor value;
  bool trainable = false;
  bool decay = false;  // participates in the L2 penalty
};

struct Model {
  NetworkConfig config;
  Mode mode = Mode::Train;
  std::vector<Param> params;  // fixed build order; checkpoint order

  int index_of(std::string_view name) const;
  Tensor& tensor(std::string_view name);
  const Tensor& tensor(std::string_view name) const;
};

// Builds the network with He-uniform conv/fc weights, zero biases, unit
// batchnorm scale. Identical seeds give bitwise-identical parameters.
Model build_alexnet(const NetworkConfig& config, std::uint64_t seed);

// Trainable parameter count (batchnorm running statistics excluded).
std::int64_t param_count(const Model& model);

// Same count derived from the configuration by shape arithmetic alone.
std::int64_t param_count_formula(const NetworkConfig& config);

struct ForwardTrace {
  NodeId input = -1;
  std::array<NodeId, 5> stage_out{-1, -1, -1, -1, -1};  // post-relu stage outputs
  NodeId head = -1;                                     // [N] log-speed
  std::vector<NodeId> param_nodes;  // aligned with model.params; -1 for running stats
};

// Appends the full forward pass for a [N,1,S,S] batch to `g`. Trainable
// parameters enter as gradient-requiring leaves. Train mode updates the
// model's batchnorm running statistics in place and requires `dropout_rng`
// when the dropout rate is nonzero.
ForwardTrace forward_trace(Model& model, Graph<float>& g, Tensor batch, Mode mode,
                           RngStream* dropout_rng);

// Predicted wind speeds in knots for a [N,1,S,S] batch, eval mode. Strictly
// positive by construction of the exponential head.
std::vector<double> predict(const Model& model, const Tensor& batch);

// Stacks images into a [N,1,S,S] batch, bilinearly resizing any image whose
// extent differs from `input_size`.
Tensor batch_from_images(std::span<const Image> images, int input_size);

// predict() over a list of [H,W] images, resized as needed and evaluated in
// fixed-size chunks.
std::vector<double> predict_images(const Model& model, std::span<const Image> images);

}  // namespace cyclonet
