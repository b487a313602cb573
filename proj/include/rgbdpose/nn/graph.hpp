#pragma once

// Tape-based reverse-mode differentiation over Tensor<T>. Nodes are created
// in topological order, so backward() simply replays the tape in reverse.

#include <functional>
#include <span>
#include <vector>

#include "rgbdpose/nn/conv.hpp"
#include "rgbdpose/nn/tensor.hpp"

namespace rgbdpose::nn {

template <class T>
class Graph {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var leaf(Tensor<T> value) { return push(std::move(value), nullptr); }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }

  /// Accumulated gradient (zero tensor if nothing flowed into `v`).
  const Tensor<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 for a scalar root and runs the tape backwards.
  void backward(Var root) {
    if (value(root).size() != 1) throw ShapeError("backward() needs a scalar root");
    grad_ref(root).data[0] = T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

  // ---- operators -------------------------------------------------------

  Var conv3d(Var x, Var w, Var b, int stride = 1, Padding padding = Padding::kSame) {
    Tensor<T> y = nn::conv3d(value(x), value(w), value(b), stride, padding);
    return push(std::move(y), [x, w, b, stride, padding](Graph& g, const Tensor<T>& dy) {
      ConvGrads<T> gr = conv3d_backward(g.value(x), g.value(w), dy, stride, padding);
      g.accumulate(x, gr.dx);
      g.accumulate(w, gr.dw);
      g.accumulate(b, gr.db);
    });
  }

  Var deconv3d(Var x, Var w, Var b, int stride = 2) {
    Tensor<T> y = nn::deconv3d(value(x), value(w), value(b), stride);
    return push(std::move(y), [x, w, b, stride](Graph& g, const Tensor<T>& dy) {
      ConvGrads<T> gr = deconv3d_backward(g.value(x), g.value(w), dy, stride);
      g.accumulate(x, gr.dx);
      g.accumulate(w, gr.dw);
      g.accumulate(b, gr.db);
    });
  }

  Var relu(Var x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return push(std::move(y), [x](Graph& g, const Tensor<T>& dy) {
      const Tensor<T>& in = g.value(x);
      Tensor<T>& dx = g.grad_ref(x);
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (in[i] > T(0)) dx[i] += dy[i];
    });
  }

  /// Concatenation along the channel axis (axis 1).
  Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const Shape& first = value(parts[0]).shape;
    if (first.size() < 2) throw ShapeError("concat needs rank >= 2");
    Shape out_shape = first;
    out_shape[1] = 0;
    std::vector<std::size_t> per_sample;
    for (Var p : parts) {
      const Shape& s = value(p).shape;
      Shape a = s, b = first;
      if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
      a[1] = b[1] = 0;
      if (a != b) throw ShapeError("concat non-channel dims differ");
      out_shape[1] += s[1];
      per_sample.push_back(value(p).stride0());
    }
    Tensor<T> y(out_shape);
    const std::size_t n = std::size_t(first[0]);
    const std::size_t out_stride = y.stride0();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor<T>& src = value(parts[k]);
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(src.ptr() + i * per_sample[k], per_sample[k],
                    y.ptr() + i * out_stride + offset);
      offset += per_sample[k];
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(y), [inputs, per_sample, n, out_stride](Graph& g, const Tensor<T>& dy) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor<T>& dx = g.grad_ref(inputs[k]);
        for (std::size_t i = 0; i < n; ++i) {
          const T* src = dy.ptr() + i * out_stride + off;
          T* dst = dx.ptr() + i * per_sample[k];
          for (std::size_t e = 0; e < per_sample[k]; ++e) dst[e] += src[e];
        }
        off += per_sample[k];
      }
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    Tensor<T> y = value(a);
    const Tensor<T>& vb = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
    return push(std::move(y), [a, b](Graph& g, const Tensor<T>& dy) {
      g.accumulate(a, dy);
      g.accumulate(b, dy);
    });
  }

  /// Nearest-neighbor upsampling of the three spatial axes by `factor`.
  Var upsample(Var x, int factor) {
    if (factor == 1) return x;
    const Tensor<T>& in = value(x);
    if (in.rank() != 5 || factor < 1) throw ShapeError("upsample expects 5D input");
    const int nc = in.dim(0) * in.dim(1);
    const int d = in.dim(2), h = in.dim(3), w = in.dim(4);
    Tensor<T> y({in.dim(0), in.dim(1), d * factor, h * factor, w * factor});
    const int D = d * factor, H = h * factor, W = w * factor;
    for (int c = 0; c < nc; ++c)
      for (int z = 0; z < D; ++z)
        for (int yy = 0; yy < H; ++yy)
          for (int xx = 0; xx < W; ++xx)
            y[((std::size_t(c) * D + z) * H + yy) * W + xx] =
                in[((std::size_t(c) * d + z / factor) * h + yy / factor) * w + xx / factor];
    return push(std::move(y), [x, factor, nc, d, h, w](Graph& g, const Tensor<T>& dy) {
      Tensor<T>& dx = g.grad_ref(x);
      const int D = d * factor, H = h * factor, W = w * factor;
      for (int c = 0; c < nc; ++c)
        for (int z = 0; z < D; ++z)
          for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx)
              dx[((std::size_t(c) * d + z / factor) * h + yy / factor) * w + xx / factor] +=
                  dy[((std::size_t(c) * D + z) * H + yy) * W + xx];
    });
  }

  /// Σ_i ‖target − preds_i‖² as a scalar node.
  Var sum_squared_error(std::span<const Var> preds, const Tensor<T>& target) {
    T total = 0;
    for (Var p : preds) {
      const Tensor<T>& v = value(p);
      require_same_shape(v, target, "loss");
      for (std::size_t i = 0; i < v.size(); ++i) {
        const T d = v[i] - target[i];
        total += d * d;
      }
    }
    std::vector<Var> inputs(preds.begin(), preds.end());
    return push(Tensor<T>({1}, std::vector<T>{total}),
                [inputs, target](Graph& g, const Tensor<T>& dy) {
                  for (Var p : inputs) {
                    const Tensor<T>& v = g.value(p);
                    Tensor<T>& dx = g.grad_ref(p);
                    for (std::size_t i = 0; i < v.size(); ++i)
                      dx[i] += T(2) * (v[i] - target[i]) * dy[0];
                  }
                });
  }

 private:
  using Backward = std::function<void(Graph&, const Tensor<T>&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
  };

  Var push(Tensor<T> value, Backward backward) {
    nodes_.push_back({std::move(value), {}, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  Tensor<T>& grad_ref(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>& dst = grad_ref(v);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace rgbdpose::nn
