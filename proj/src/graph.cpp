#include "cyclonet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cyclonet {

namespace {

// c[M,N] += a[M,K] * b[K,N]
template <typename T>
void matmul_nn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    const T* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M,K] += a[M,N] * b[K,N]^T
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * n;
    T* crow = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T* brow = b + static_cast<std::size_t>(p) * n;
      T acc = T(0);
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

struct ConvDims {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

template <typename T>
ConvDims conv_dims(const TensorT<T>& input, const TensorT<T>& kernel, int stride,
                   Padding padding) {
  require_rank("conv2d input", input.shape(), 4);
  require_rank("conv2d kernel", kernel.shape(), 4);
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const int in_c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int k_c = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (in_c != k_c) {
    throw ShapeError("conv2d: input channel axis (" + std::to_string(in_c) +
                     ") does not match kernel channel axis (" + std::to_string(k_c) + ")");
  }
  ConvDims d;
  if (padding == Padding::Valid) {
    if (kh > h || kw > w) {
      throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " exceeds input spatial axes " + std::to_string(h) + "x" +
                       std::to_string(w) + " under valid padding");
    }
    d.out_h = (h - kh) / stride + 1;
    d.out_w = (w - kw) / stride + 1;
  } else {
    d.out_h = (h + stride - 1) / stride;
    d.out_w = (w + stride - 1) / stride;
    const int pad_h = std::max((d.out_h - 1) * stride + kh - h, 0);
    const int pad_w = std::max((d.out_w - 1) * stride + kw - w, 0);
    d.pad_top = pad_h / 2;
    d.pad_left = pad_w / 2;
  }
  return d;
}

// Unpack one sample's [C,H,W] plane into columns [C*kh*kw, OH*OW].
template <typename T>
void im2col(const T* in, int c, int h, int w, int kh, int kw, int stride, const ConvDims& d,
            T* cols) {
  const int m = d.out_h * d.out_w;
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = in + static_cast<std::size_t>(ch) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + static_cast<std::size_t>((ch * kh + ki) * kw + kj) * m;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int ih = oh * stride - d.pad_top + ki;
          T* out = row + static_cast<std::size_t>(oh) * d.out_w;
          if (ih < 0 || ih >= h) {
            std::fill(out, out + d.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int iw = ow * stride - d.pad_left + kj;
            out[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add columns back into one sample's [C,H,W] gradient plane.
template <typename T>
void col2im_acc(const T* cols, int c, int h, int w, int kh, int kw, int stride,
                const ConvDims& d, T* din) {
  const int m = d.out_h * d.out_w;
  for (int ch = 0; ch < c; ++ch) {
    T* plane = din + static_cast<std::size_t>(ch) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + static_cast<std::size_t>((ch * kh + ki) * kw + kj) * m;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int ih = oh * stride - d.pad_top + ki;
          if (ih < 0 || ih >= h) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * w;
          const T* src = row + static_cast<std::size_t>(oh) * d.out_w;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int iw = ow * stride - d.pad_left + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
NodeId Graph<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

template <typename T>
NodeId Graph<T>::leaf(TensorT<T> value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, Padding padding) {
  const TensorT<T>& x = value(input);
  const TensorT<T>& k = value(kernel);
  const TensorT<T>& b = value(bias);
  const ConvDims d = conv_dims(x, k, stride, padding);
  const int batch = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_c = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (b.rank() != 1 || b.dim(0) != out_c) {
    throw ShapeError("conv2d: bias shape " + b.shape_str() + " does not match output channel axis (" +
                     std::to_string(out_c) + ")");
  }
  const int m = d.out_h * d.out_w;
  const int cols_k = in_c * kh * kw;

  Node n;
  n.op = Op::Conv2d;
  n.in = {input, kernel, bias};
  n.ctx = ConvCtx{stride, padding};
  n.requires_grad = requires_grad(input) || requires_grad(kernel) || requires_grad(bias);
  n.value = TensorT<T>({batch, out_c, d.out_h, d.out_w});

  std::vector<T> cols(static_cast<std::size_t>(cols_k) * m);
  for (int s = 0; s < batch; ++s) {
    im2col(x.data() + static_cast<std::size_t>(s) * in_c * h * w, in_c, h, w, kh, kw, stride, d,
           cols.data());
    T* out = n.value.data() + static_cast<std::size_t>(s) * out_c * m;
    matmul_nn_acc(k.data(), cols.data(), out, out_c, cols_k, m);
    for (int o = 0; o < out_c; ++o) {
      const T bv = b[o];
      T* row = out + static_cast<std::size_t>(o) * m;
      for (int j = 0; j < m; ++j) row[j] += bv;
    }
  }
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::maxpool2d(NodeId input) {
  const TensorT<T>& x = value(input);
  require_rank("maxpool2d input", x.shape(), 4);
  const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial axes must be even, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const int oh = h / 2, ow = w / 2;

  Node n;
  n.op = Op::MaxPool2d;
  n.in = {input, -1, -1};
  n.requires_grad = requires_grad(input);
  n.value = TensorT<T>({batch, c, oh, ow});
  PoolCtx ctx;
  ctx.argmax.resize(static_cast<std::size_t>(n.value.size()));

  std::int64_t out_i = 0;
  for (int s = 0; s < batch; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (static_cast<std::size_t>(s) * c + ch) * h * w;
      const std::int64_t plane_off = (static_cast<std::int64_t>(s) * c + ch) * h * w;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          const int r = 2 * i, q = 2 * j;
          // first occurrence in row-major window order wins ties
          int best = r * w + q;
          T best_v = plane[best];
          const int cand[3] = {r * w + q + 1, (r + 1) * w + q, (r + 1) * w + q + 1};
          for (int idx : cand) {
            if (plane[idx] > best_v) {
              best_v = plane[idx];
              best = idx;
            }
          }
          n.value[out_i] = best_v;
          ctx.argmax[static_cast<std::size_t>(out_i)] = plane_off + best;
          ++out_i;
        }
      }
    }
  }
  n.ctx = std::move(ctx);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::batchnorm(NodeId input, NodeId gamma, NodeId beta, RunningStats running, T eps,
                           T momentum, Mode mode) {
  const TensorT<T>& x = value(input);
  require_rank("batchnorm input", x.shape(), 4);
  const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const TensorT<T>& g = value(gamma);
  const TensorT<T>& b = value(beta);
  if (g.rank() != 1 || g.dim(0) != c || b.rank() != 1 || b.dim(0) != c) {
    throw ShapeError("batchnorm: gamma/beta must be [" + std::to_string(c) + "], got " +
                     g.shape_str() + " and " + b.shape_str());
  }
  if (eps <= T(0)) throw ConfigError("batchnorm: eps must be positive");
  if (running.mean == nullptr || running.var == nullptr) {
    throw ConfigError("batchnorm: running statistics are required");
  }
  const std::int64_t m = static_cast<std::int64_t>(batch) * h * w;
  const int hw = h * w;

  Node n;
  n.op = Op::BatchNorm;
  n.in = {input, gamma, beta};
  n.requires_grad = requires_grad(input) || requires_grad(gamma) || requires_grad(beta);
  n.value = TensorT<T>(x.shape());
  BnCtx ctx;
  ctx.mode = mode;
  ctx.xhat = TensorT<T>(x.shape());
  ctx.inv_std.resize(static_cast<std::size_t>(c));

  for (int ch = 0; ch < c; ++ch) {
    T mu, inv;
    if (mode == Mode::Train) {
      T sum = T(0);
      for (int s = 0; s < batch; ++s) {
        const T* plane = x.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) sum += plane[p];
      }
      mu = sum / static_cast<T>(m);
      T sq = T(0);
      for (int s = 0; s < batch; ++s) {
        const T* plane = x.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) {
          const T d = plane[p] - mu;
          sq += d * d;
        }
      }
      const T var = sq / static_cast<T>(m);
      inv = T(1) / std::sqrt(var + eps);
      (*running.mean)[ch] = (T(1) - momentum) * (*running.mean)[ch] + momentum * mu;
      (*running.var)[ch] = (T(1) - momentum) * (*running.var)[ch] + momentum * var;
    } else {
      mu = (*running.mean)[ch];
      inv = T(1) / std::sqrt((*running.var)[ch] + eps);
    }
    ctx.inv_std[static_cast<std::size_t>(ch)] = inv;
    const T gv = g[ch], bv = b[ch];
    for (int s = 0; s < batch; ++s) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
      const T* xin = x.data() + off;
      T* xh = ctx.xhat.data() + off;
      T* out = n.value.data() + off;
      for (int p = 0; p < hw; ++p) {
        xh[p] = (xin[p] - mu) * inv;
        out[p] = gv * xh[p] + bv;
      }
    }
  }
  n.ctx = std::move(ctx);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::dense(NodeId input, NodeId weight, NodeId bias) {
  const TensorT<T>& x = value(input);
  const TensorT<T>& wt = value(weight);
  const TensorT<T>& b = value(bias);
  require_rank("dense input", x.shape(), 2);
  require_rank("dense weight", wt.shape(), 2);
  if (x.dim(1) != wt.dim(0)) {
    throw ShapeError("dense: input feature axis (" + std::to_string(x.dim(1)) +
                     ") does not match weight input axis (" + std::to_string(wt.dim(0)) + ")");
  }
  if (b.rank() != 1 || b.dim(0) != wt.dim(1)) {
    throw ShapeError("dense: bias shape " + b.shape_str() + " does not match weight output axis (" +
                     std::to_string(wt.dim(1)) + ")");
  }
  const int batch = x.dim(0), f = x.dim(1), g = wt.dim(1);

  Node n;
  n.op = Op::Dense;
  n.in = {input, weight, bias};
  n.requires_grad = requires_grad(input) || requires_grad(weight) || requires_grad(bias);
  n.value = TensorT<T>({batch, g});
  matmul_nn_acc(x.data(), wt.data(), n.value.data(), batch, f, g);
  for (int s = 0; s < batch; ++s) {
    T* row = n.value.data() + static_cast<std::size_t>(s) * g;
    for (int j = 0; j < g; ++j) row[j] += b[j];
  }
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::relu(NodeId input) {
  const TensorT<T>& x = value(input);
  Node n;
  n.op = Op::Relu;
  n.in = {input, -1, -1};
  n.requires_grad = requires_grad(input);
  n.value = TensorT<T>(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > T(0) ? x[i] : T(0);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::dropout(NodeId input, T rate, Mode mode, RngStream* rng) {
  if (rate < T(0) || rate >= T(1)) {
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::Eval || rate == T(0)) return input;
  if (rng == nullptr) throw ConfigError("dropout: train mode with nonzero rate needs an rng stream");
  const TensorT<T>& x = value(input);
  Node n;
  n.op = Op::Dropout;
  n.in = {input, -1, -1};
  n.requires_grad = requires_grad(input);
  n.value = TensorT<T>(x.shape());
  DropCtx ctx;
  ctx.mask.resize(static_cast<std::size_t>(x.size()));
  const T keep_scale = T(1) / (T(1) - rate);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const T mv = rng->uniform() < static_cast<double>(rate) ? T(0) : keep_scale;
    ctx.mask[static_cast<std::size_t>(i)] = mv;
    n.value[i] = x[i] * mv;
  }
  n.ctx = std::move(ctx);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::reshape(NodeId input, std::vector<int> shape) {
  Node n;
  n.op = Op::Reshape;
  n.in = {input, -1, -1};
  n.requires_grad = requires_grad(input);
  n.value = value(input).reshaped(std::move(shape));
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
  const TensorT<T>& xa = value(a);
  const TensorT<T>& xb = value(b);
  require_same_shape("add", xa.shape(), xb.shape());
  Node n;
  n.op = Op::Add;
  n.in = {a, b, -1};
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) n.value[i] = xa[i] + xb[i];
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::sub(NodeId a, NodeId b) {
  const TensorT<T>& xa = value(a);
  const TensorT<T>& xb = value(b);
  require_same_shape("sub", xa.shape(), xb.shape());
  Node n;
  n.op = Op::Sub;
  n.in = {a, b, -1};
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) n.value[i] = xa[i] - xb[i];
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mul(NodeId a, NodeId b) {
  const TensorT<T>& xa = value(a);
  const TensorT<T>& xb = value(b);
  require_same_shape("mul", xa.shape(), xb.shape());
  Node n;
  n.op = Op::Mul;
  n.in = {a, b, -1};
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) n.value[i] = xa[i] * xb[i];
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::scale_shift(NodeId a, T scale, T shift) {
  const TensorT<T>& xa = value(a);
  Node n;
  n.op = Op::ScaleShift;
  n.in = {a, -1, -1};
  n.ctx = ScaleCtx{scale, shift};
  n.requires_grad = requires_grad(a);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) n.value[i] = scale * xa[i] + shift;
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::log(NodeId a) {
  const TensorT<T>& xa = value(a);
  Node n;
  n.op = Op::Log;
  n.in = {a, -1, -1};
  n.requires_grad = requires_grad(a);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) {
    if (!(xa[i] > T(0))) {
      throw NumericError("log: nonpositive element " + std::to_string(xa[i]) + " at index " +
                         std::to_string(i));
    }
    n.value[i] = std::log(xa[i]);
  }
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::exp(NodeId a) {
  const TensorT<T>& xa = value(a);
  Node n;
  n.op = Op::Exp;
  n.in = {a, -1, -1};
  n.requires_grad = requires_grad(a);
  n.value = TensorT<T>(xa.shape());
  for (std::int64_t i = 0; i < xa.size(); ++i) n.value[i] = std::exp(xa[i]);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::sum(NodeId a) {
  const TensorT<T>& xa = value(a);
  Node n;
  n.op = Op::Sum;
  n.in = {a, -1, -1};
  n.requires_grad = requires_grad(a);
  T acc = T(0);
  for (std::int64_t i = 0; i < xa.size(); ++i) acc += xa[i];
  n.value = TensorT<T>::scalar(acc);
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::mean(NodeId a) {
  const TensorT<T>& xa = value(a);
  Node n;
  n.op = Op::Mean;
  n.in = {a, -1, -1};
  n.requires_grad = requires_grad(a);
  T acc = T(0);
  for (std::int64_t i = 0; i < xa.size(); ++i) acc += xa[i];
  n.value = TensorT<T>::scalar(acc / static_cast<T>(xa.size()));
  return push(std::move(n));
}

template <typename T>
const TensorT<T>& Graph<T>::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    throw Error("grad: node " + std::to_string(id) +
                " has no gradient (backward not run, or node does not require grad)");
  }
  return n.grad;
}

template <typename T>
TensorT<T>& Graph<T>::grad_buf(NodeId id) {
  return nodes_[static_cast<std::size_t>(id)].grad;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (loss < 0 || loss >= node_count()) throw Error("backward: invalid loss node");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + value(loss).shape_str());
  }
  // Zero-fill gradients for every gradient-requiring node at or below the
  // loss; parameters the loss never reaches end with zero grad.
  for (NodeId id = 0; id <= loss; ++id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad) {
      n.grad = TensorT<T>(n.value.shape());
    } else {
      n.grad = TensorT<T>();
    }
  }
  if (!nodes_[static_cast<std::size_t>(loss)].requires_grad) return;
  grad_buf(loss)[0] = T(1);
  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.op == Op::Leaf) continue;
    backprop_node(id);
  }
}

template <typename T>
void Graph<T>::backprop_node(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const TensorT<T>& g = n.grad;
  const auto wants = [this](NodeId in) { return in >= 0 && nodes_[(std::size_t)in].requires_grad; };

  switch (n.op) {
    case Op::Conv2d: {
      const auto& ctx = std::get<ConvCtx>(n.ctx);
      const TensorT<T>& x = value(n.in[0]);
      const TensorT<T>& k = value(n.in[1]);
      const ConvDims d = conv_dims(x, k, ctx.stride, ctx.padding);
      const int batch = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
      const int out_c = k.dim(0), kh = k.dim(2), kw = k.dim(3);
      const int m = d.out_h * d.out_w;
      const int cols_k = in_c * kh * kw;

      const bool want_x = wants(n.in[0]);
      const bool want_k = wants(n.in[1]);
      const bool want_b = wants(n.in[2]);
      std::vector<T> cols(static_cast<std::size_t>(cols_k) * m);
      std::vector<T> dcols;
      if (want_x) dcols.resize(static_cast<std::size_t>(cols_k) * m);

      for (int s = 0; s < batch; ++s) {
        const T* gout = g.data() + static_cast<std::size_t>(s) * out_c * m;
        if (want_k || want_x) {
          im2col(x.data() + static_cast<std::size_t>(s) * in_c * h * w, in_c, h, w, kh, kw,
                 ctx.stride, d, cols.data());
        }
        if (want_k) {
          matmul_nt_acc(gout, cols.data(), grad_buf(n.in[1]).data(), out_c, cols_k, m);
        }
        if (want_b) {
          TensorT<T>& db = grad_buf(n.in[2]);
          for (int o = 0; o < out_c; ++o) {
            const T* row = gout + static_cast<std::size_t>(o) * m;
            T acc = T(0);
            for (int j = 0; j < m; ++j) acc += row[j];
            db[o] += acc;
          }
        }
        if (want_x) {
          std::fill(dcols.begin(), dcols.end(), T(0));
          matmul_tn_acc(k.data(), gout, dcols.data(), out_c, cols_k, m);
          col2im_acc(dcols.data(), in_c, h, w, kh, kw, ctx.stride, d,
                     grad_buf(n.in[0]).data() + static_cast<std::size_t>(s) * in_c * h * w);
        }
      }
      break;
    }
    case Op::MaxPool2d: {
      if (!wants(n.in[0])) break;
      const auto& ctx = std::get<PoolCtx>(n.ctx);
      TensorT<T>& dx = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) {
        dx[ctx.argmax[static_cast<std::size_t>(i)]] += g[i];
      }
      break;
    }
    case Op::BatchNorm: {
      const auto& ctx = std::get<BnCtx>(n.ctx);
      const TensorT<T>& gamma = value(n.in[1]);
      const TensorT<T>& xhat = ctx.xhat;
      const int batch = xhat.dim(0), c = xhat.dim(1), hw = xhat.dim(2) * xhat.dim(3);
      const std::int64_t m = static_cast<std::int64_t>(batch) * hw;
      const bool want_x = wants(n.in[0]);
      const bool want_g = wants(n.in[1]);
      const bool want_b = wants(n.in[2]);

      for (int ch = 0; ch < c; ++ch) {
        T sum_g = T(0), sum_gx = T(0);
        for (int s = 0; s < batch; ++s) {
          const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
          const T* gp = g.data() + off;
          const T* xh = xhat.data() + off;
          for (int p = 0; p < hw; ++p) {
            sum_g += gp[p];
            sum_gx += gp[p] * xh[p];
          }
        }
        if (want_g) grad_buf(n.in[1])[ch] += sum_gx;
        if (want_b) grad_buf(n.in[2])[ch] += sum_g;
        if (want_x) {
          const T gv = gamma[ch];
          const T inv = ctx.inv_std[static_cast<std::size_t>(ch)];
          TensorT<T>& dx = grad_buf(n.in[0]);
          if (ctx.mode == Mode::Train) {
            // gradient flows through the batch mean and variance
            const T inv_m = T(1) / static_cast<T>(m);
            for (int s = 0; s < batch; ++s) {
              const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
              const T* gp = g.data() + off;
              const T* xh = xhat.data() + off;
              T* dxp = dx.data() + off;
              for (int p = 0; p < hw; ++p) {
                dxp[p] += gv * inv * (gp[p] - inv_m * sum_g - xh[p] * inv_m * sum_gx);
              }
            }
          } else {
            for (int s = 0; s < batch; ++s) {
              const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
              const T* gp = g.data() + off;
              T* dxp = dx.data() + off;
              for (int p = 0; p < hw; ++p) dxp[p] += gv * inv * gp[p];
            }
          }
        }
      }
      break;
    }
    case Op::Dense: {
      const TensorT<T>& x = value(n.in[0]);
      const TensorT<T>& wt = value(n.in[1]);
      const int batch = x.dim(0), f = x.dim(1), gdim = wt.dim(1);
      if (wants(n.in[0])) {
        matmul_nt_acc(g.data(), wt.data(), grad_buf(n.in[0]).data(), batch, f, gdim);
      }
      if (wants(n.in[1])) {
        matmul_tn_acc(x.data(), g.data(), grad_buf(n.in[1]).data(), batch, f, gdim);
      }
      if (wants(n.in[2])) {
        TensorT<T>& db = grad_buf(n.in[2]);
        for (int s = 0; s < batch; ++s) {
          const T* row = g.data() + static_cast<std::size_t>(s) * gdim;
          for (int j = 0; j < gdim; ++j) db[j] += row[j];
        }
      }
      break;
    }
    case Op::Relu: {
      if (!wants(n.in[0])) break;
      TensorT<T>& dx = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) {
        if (n.value[i] > T(0)) dx[i] += g[i];
      }
      break;
    }
    case Op::Dropout: {
      if (!wants(n.in[0])) break;
      const auto& ctx = std::get<DropCtx>(n.ctx);
      TensorT<T>& dx = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) {
        dx[i] += g[i] * ctx.mask[static_cast<std::size_t>(i)];
      }
      break;
    }
    case Op::Reshape: {
      if (!wants(n.in[0])) break;
      TensorT<T>& dx = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      break;
    }
    case Op::Add: {
      for (int s = 0; s < 2; ++s) {
        if (!wants(n.in[s])) continue;
        TensorT<T>& d = grad_buf(n.in[s]);
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      if (wants(n.in[0])) {
        TensorT<T>& d = grad_buf(n.in[0]);
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (wants(n.in[1])) {
        TensorT<T>& d = grad_buf(n.in[1]);
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      const TensorT<T>& xa = value(n.in[0]);
      const TensorT<T>& xb = value(n.in[1]);
      if (wants(n.in[0])) {
        TensorT<T>& d = grad_buf(n.in[0]);
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * xb[i];
      }
      if (wants(n.in[1])) {
        TensorT<T>& d = grad_buf(n.in[1]);
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * xa[i];
      }
      break;
    }
    case Op::ScaleShift: {
      if (!wants(n.in[0])) break;
      const auto& ctx = std::get<ScaleCtx>(n.ctx);
      TensorT<T>& d = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * ctx.scale;
      break;
    }
    case Op::Log: {
      if (!wants(n.in[0])) break;
      const TensorT<T>& x = value(n.in[0]);
      TensorT<T>& d = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i] / x[i];
      break;
    }
    case Op::Exp: {
      if (!wants(n.in[0])) break;
      TensorT<T>& d = grad_buf(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.value[i];
      break;
    }
    case Op::Sum: {
      if (!wants(n.in[0])) break;
      TensorT<T>& d = grad_buf(n.in[0]);
      const T gv = g[0];
      for (std::int64_t i = 0; i < d.size(); ++i) d[i] += gv;
      break;
    }
    case Op::Mean: {
      if (!wants(n.in[0])) break;
      TensorT<T>& d = grad_buf(n.in[0]);
      const T gv = g[0] / static_cast<T>(d.size());
      for (std::int64_t i = 0; i < d.size(); ++i) d[i] += gv;
      break;
    }
    case Op::Leaf:
      break;
  }
}

template <typename T>
GradCheckReport<T> grad_check(
    const std::function<NodeId(Graph<T>&, const std::vector<NodeId>&)>& build,
    const std::vector<TensorT<T>>& inputs, T step) {
  if (!(step > T(0))) throw ConfigError("grad_check: step must be positive");

  Graph<T> g;
  std::vector<NodeId> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
  const NodeId loss = build(g, leaves);
  g.backward(loss);
  std::vector<TensorT<T>> analytic;
  analytic.reserve(inputs.size());
  for (NodeId id : leaves) analytic.push_back(g.grad(id));

  const auto eval = [&](const std::vector<TensorT<T>>& xs) -> T {
    Graph<T> h;
    std::vector<NodeId> ls;
    ls.reserve(xs.size());
    for (const auto& t : xs) ls.push_back(h.leaf(t, false));
    return h.value(build(h, ls))[0];
  };

  GradCheckReport<T> report;
  std::vector<TensorT<T>> xs = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t j = 0; j < inputs[i].size(); ++j) {
      const T orig = inputs[i][j];
      xs[i][j] = orig + step;
      const T fp = eval(xs);
      xs[i][j] = orig - step;
      const T fm = eval(xs);
      xs[i][j] = orig;
      const T numeric = (fp - fm) / (T(2) * step);
      const T a = analytic[i][j];
      // relative error with an absolute floor so near-zero gradients do not
      // amplify finite-difference roundoff
      const T denom = std::max(std::max(std::abs(a), std::abs(numeric)), T(1e-4));
      const T err = std::abs(a - numeric) / denom;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = static_cast<int>(i);
        report.worst_coord = j;
      }
    }
  }
  return report;
}

template class Graph<float>;
template class Graph<double>;
template GradCheckReport<float> grad_check<float>(
    const std::function<NodeId(Graph<float>&, const std::vector<NodeId>&)>&,
    const std::vector<TensorT<float>>&, float);
template GradCheckReport<double> grad_check<double>(
    const std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>&,
    const std::vector<TensorT<double>>&, double);

}  // namespace cyclonet
