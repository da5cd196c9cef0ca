#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "cyclonet/rng.hpp"
#include "cyclonet/tensor.hpp"

namespace cyclonet {

enum class Padding { Valid, Same };
enum class Mode { Train, Eval };

using NodeId = int;

// Reverse-mode autodiff tape. Nodes are appended in execution order, which is
// a topological order by construction; backward() walks them in exact reverse
// order and sums gradient contributions over all uses of a node.
//
// Tensors held by nodes are immutable once written. One graph is
// single-threaded; independent graphs may run concurrently.
template <typename T>
class Graph {
 public:
  // Mutable per-channel running statistics a batchnorm node reads in Eval
  // mode and updates in Train mode. Owned by the caller (the model).
  struct RunningStats {
    TensorT<T>* mean = nullptr;
    TensorT<T>* var = nullptr;
  };

  NodeId leaf(TensorT<T> value, bool requires_grad = false);

  // Cross-correlation of input [N,C,H,W] with kernel [O,C,kh,kw] plus
  // per-output-channel bias [O].
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, Padding padding);

  // 2x2 window, stride 2. Spatial extents must be even. Backward routes each
  // window's gradient to the first maximal element in row-major order.
  NodeId maxpool2d(NodeId input);

  // Per-channel batch normalization of [N,C,H,W]. Train mode normalizes by
  // batch statistics (biased variance) and updates running stats in place:
  // running = (1 - momentum) * running + momentum * batch.
  NodeId batchnorm(NodeId input, NodeId gamma, NodeId beta, RunningStats running, T eps,
                   T momentum, Mode mode);

  // Affine map: input [N,F] * weight [F,G] + bias [G].
  NodeId dense(NodeId input, NodeId weight, NodeId bias);

  NodeId relu(NodeId input);

  // Inverted dropout: in Train mode zeroes each element with probability
  // `rate` and scales survivors by 1/(1-rate); Eval mode is the identity
  // (returns `input` itself, no node appended). `rng` may be null only when
  // no mask is drawn (Eval mode or rate 0).
  NodeId dropout(NodeId input, T rate, Mode mode, RngStream* rng);

  NodeId reshape(NodeId input, std::vector<int> shape);

  // Elementwise ops on same-shape tensors.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  // scale * x + shift, elementwise scalars.
  NodeId scale_shift(NodeId a, T scale, T shift);
  // Natural log; every element must be strictly positive.
  NodeId log(NodeId a);
  NodeId exp(NodeId a);

  // Full reductions to a scalar [1] tensor.
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);

  const TensorT<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Gradient of the last backward()'s loss w.r.t. node `id`. Zero tensor for
  // nodes the loss does not reach.
  const TensorT<T>& grad(NodeId id) const;

  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  // Reverse pass from a scalar loss node. Populates grad() for every
  // gradient-requiring node at or below `loss` in the tape.
  void backward(NodeId loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    Leaf,
    Conv2d,
    MaxPool2d,
    BatchNorm,
    Dense,
    Relu,
    Dropout,
    Reshape,
    Add,
    Sub,
    Mul,
    ScaleShift,
    Log,
    Exp,
    Sum,
    Mean,
  };

  struct ConvCtx {
    int stride;
    Padding padding;
  };
  struct PoolCtx {
    std::vector<std::int32_t> argmax;  // input-plane offset per output cell
  };
  struct BnCtx {
    TensorT<T> xhat;     // normalized input, saved for backward
    std::vector<T> inv_std;  // per channel
    Mode mode;
  };
  struct DropCtx {
    std::vector<T> mask;  // 0 or 1/(1-rate) per element
  };
  struct ScaleCtx {
    T scale;
    T shift;
  };
  using Ctx = std::variant<std::monostate, ConvCtx, PoolCtx, BnCtx, DropCtx, ScaleCtx>;

  struct Node {
    Op op = Op::Leaf;
    std::array<NodeId, 3> in{-1, -1, -1};
    TensorT<T> value;
    TensorT<T> grad;  // allocated during backward
    Ctx ctx;
    bool requires_grad = false;
  };

  NodeId push(Node node);
  TensorT<T>& grad_buf(NodeId id);
  void backprop_node(NodeId id);

  std::vector<Node> nodes_;
  TensorT<T> zero_grad_;  // lazily sized scratch for grad() of untouched nodes
};

// Worst relative disagreement between the analytic gradient of a scalar
// function and its central finite difference, taken over every coordinate of
// every input. `build` must construct the function on the given leaves and
// return the scalar loss node.
template <typename T>
struct GradCheckReport {
  T max_rel_error = T(0);
  int worst_input = -1;
  std::int64_t worst_coord = -1;
};

template <typename T>
GradCheckReport<T> grad_check(
    const std::function<NodeId(Graph<T>&, const std::vector<NodeId>&)>& build,
    const std::vector<TensorT<T>>& inputs, T step);

extern template class Graph<float>;
extern template class Graph<double>;
extern template GradCheckReport<float> grad_check<float>(
    const std::function<NodeId(Graph<float>&, const std::vector<NodeId>&)>&,
    const std::vector<TensorT<float>>&, float);
extern template GradCheckReport<double> grad_check<double>(
    const std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>&,
    const std::vector<TensorT<double>>&, double);

}  // namespace cyclonet
