#pragma once

// 3D convolution and transposed convolution on N, C, D, H, W tensors via
// im2col + GEMM. Weights use the [out, in, k, k, k] layout for convolutions
// and [in, out, k, k, k] for transposed convolutions, so a transposed
// convolution sharing its weight with a convolution is exactly its adjoint.

#include <Eigen/Core>

#include "rgbdpose/nn/tensor.hpp"

namespace rgbdpose::nn {

enum class Padding { kSame, kValid };

struct ConvGeometry {
  int channels = 0;
  int in_d = 0, in_h = 0, in_w = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int out_d = 0, out_h = 0, out_w = 0;

  static ConvGeometry make(int channels, int d, int h, int w, int kernel, int stride,
                           Padding padding) {
    if (kernel < 1 || stride < 1) throw ShapeError("kernel and stride must be positive");
    ConvGeometry g;
    g.channels = channels;
    g.in_d = d;
    g.in_h = h;
    g.in_w = w;
    g.kernel = kernel;
    g.stride = stride;
    g.pad = padding == Padding::kSame ? (kernel - 1) / 2 : 0;
    auto out = [&](int n) {
      const int span = n + 2 * g.pad - kernel;
      if (span < 0) throw ShapeError("kernel larger than padded input");
      return span / stride + 1;
    };
    g.out_d = out(d);
    g.out_h = out(h);
    g.out_w = out(w);
    return g;
  }

  std::size_t rows() const { return std::size_t(channels) * kernel * kernel * kernel; }
  std::size_t in_voxels() const { return std::size_t(in_d) * in_h * in_w; }
  std::size_t out_voxels() const { return std::size_t(out_d) * out_h * out_w; }
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

/// Visits every (column-matrix entry, input voxel) pair; `fn(col_offset,
/// in_offset)` with in_offset < 0 for padding.
template <class Fn>
void for_each_patch(const ConvGeometry& g, Fn&& fn) {
  const int k = g.kernel;
  const std::size_t cols = g.out_voxels();
  std::size_t row = 0;
  for (int c = 0; c < g.channels; ++c) {
    const std::ptrdiff_t cbase = std::ptrdiff_t(c) * std::ptrdiff_t(g.in_voxels());
    for (int kd = 0; kd < k; ++kd)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw, ++row) {
          std::size_t col = row * cols;
          for (int od = 0; od < g.out_d; ++od) {
            const int id = od * g.stride - g.pad + kd;
            const bool dok = id >= 0 && id < g.in_d;
            for (int oh = 0; oh < g.out_h; ++oh) {
              const int ih = oh * g.stride - g.pad + kh;
              const bool hok = dok && ih >= 0 && ih < g.in_h;
              const std::ptrdiff_t rowbase =
                  cbase + (std::ptrdiff_t(id) * g.in_h + ih) * std::ptrdiff_t(g.in_w);
              for (int ow = 0; ow < g.out_w; ++ow, ++col) {
                const int iw = ow * g.stride - g.pad + kw;
                fn(col, hok && iw >= 0 && iw < g.in_w ? rowbase + iw : std::ptrdiff_t(-1));
              }
            }
          }
        }
  }
}

}  // namespace detail

template <class T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  detail::for_each_patch(g, [&](std::size_t col, std::ptrdiff_t src) {
    cols[col] = src >= 0 ? in[src] : T(0);
  });
}

/// Adjoint of im2col: accumulates column entries back into `out`.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* out) {
  detail::for_each_patch(g, [&](std::size_t col, std::ptrdiff_t dst) {
    if (dst >= 0) out[dst] += cols[col];
  });
}

template <class T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

namespace detail {

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, int stride, Padding padding) {
  if (x.rank() != 5 || w.rank() != 5) throw ShapeError("conv3d expects 5D input and weight");
  if (w.dim(1) != x.dim(1))
    throw ShapeError("conv3d channel mismatch: input " + to_string(x.shape) + ", weight " +
                     to_string(w.shape));
  if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4)) throw ShapeError("kernel must be cubic");
  return ConvGeometry::make(x.dim(1), x.dim(2), x.dim(3), x.dim(4), w.dim(2), stride, padding);
}

template <class T>
ConvGeometry deconv_geometry(const Tensor<T>& x, const Tensor<T>& w, int stride) {
  if (x.rank() != 5 || w.rank() != 5) throw ShapeError("deconv3d expects 5D input and weight");
  if (w.dim(0) != x.dim(1))
    throw ShapeError("deconv3d channel mismatch: input " + to_string(x.shape) + ", weight " +
                     to_string(w.shape));
  if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4)) throw ShapeError("kernel must be cubic");
  // Geometry of the forward convolution this operator transposes.
  const ConvGeometry g = ConvGeometry::make(w.dim(1), x.dim(2) * stride, x.dim(3) * stride,
                                            x.dim(4) * stride, w.dim(2), stride, Padding::kSame);
  if (g.out_d != x.dim(2) || g.out_h != x.dim(3) || g.out_w != x.dim(4))
    throw ShapeError("deconv3d geometry is not invertible for this kernel/stride");
  return g;
}

template <class T>
void check_bias(const Tensor<T>& b, int channels) {
  if (b.rank() != 1 || b.dim(0) != channels) throw ShapeError("bias must have one entry per channel");
}

}  // namespace detail

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1,
                 Padding padding = Padding::kSame) {
  const ConvGeometry g = detail::conv_geometry(x, w, stride, padding);
  const int n = x.dim(0);
  const int cout = w.dim(0);
  detail::check_bias(b, cout);
  Tensor<T> y({n, cout, g.out_d, g.out_h, g.out_w});
  std::vector<T> cols(g.rows() * g.out_voxels());
  const detail::CMapMat<T> wm(w.ptr(), cout, Eigen::Index(g.rows()));
  const detail::CMapMat<T> cm(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.out_voxels()));
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + std::size_t(i) * x.stride0(), g, cols.data());
    detail::MapMat<T> ym(y.ptr() + std::size_t(i) * y.stride0(), cout,
                         Eigen::Index(g.out_voxels()));
    ym.noalias() = wm * cm;
    for (int c = 0; c < cout; ++c) ym.row(c).array() += b[std::size_t(c)];
  }
  return y;
}

template <class T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             int stride = 1, Padding padding = Padding::kSame) {
  const ConvGeometry g = detail::conv_geometry(x, w, stride, padding);
  const int n = x.dim(0);
  const int cout = w.dim(0);
  if (dy.shape != Shape{n, cout, g.out_d, g.out_h, g.out_w})
    throw ShapeError("conv3d gradient shape mismatch");
  ConvGrads<T> grads{Tensor<T>(x.shape), Tensor<T>(w.shape), Tensor<T>({cout})};
  std::vector<T> cols(g.rows() * g.out_voxels());
  std::vector<T> dcols(cols.size());
  const detail::CMapMat<T> wm(w.ptr(), cout, Eigen::Index(g.rows()));
  detail::MapMat<T> dwm(grads.dw.ptr(), cout, Eigen::Index(g.rows()));
  const detail::CMapMat<T> cm(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.out_voxels()));
  detail::MapMat<T> dcm(dcols.data(), Eigen::Index(g.rows()), Eigen::Index(g.out_voxels()));
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + std::size_t(i) * x.stride0(), g, cols.data());
    const detail::CMapMat<T> dym(dy.ptr() + std::size_t(i) * dy.stride0(), cout,
                                 Eigen::Index(g.out_voxels()));
    dwm.noalias() += dym * cm.transpose();
    for (int c = 0; c < cout; ++c) grads.db[std::size_t(c)] += dym.row(c).sum();
    dcm.noalias() = wm.transpose() * dym;
    col2im(dcols.data(), g, grads.dx.ptr() + std::size_t(i) * x.stride0());
  }
  return grads;
}

/// Transposed convolution; spatial output = input · stride.
template <class T>
Tensor<T> deconv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 2) {
  const ConvGeometry g = detail::deconv_geometry(x, w, stride);
  const int n = x.dim(0);
  const int cin = w.dim(0);
  const int cout = w.dim(1);
  detail::check_bias(b, cout);
  Tensor<T> y({n, cout, g.in_d, g.in_h, g.in_w});
  std::vector<T> cols(g.rows() * g.out_voxels());
  const detail::CMapMat<T> wm(w.ptr(), cin, Eigen::Index(g.rows()));
  detail::MapMat<T> cm(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.out_voxels()));
  const std::size_t out_vox = g.in_voxels();
  for (int i = 0; i < n; ++i) {
    const detail::CMapMat<T> xm(x.ptr() + std::size_t(i) * x.stride0(), cin,
                                Eigen::Index(g.out_voxels()));
    cm.noalias() = wm.transpose() * xm;
    T* yi = y.ptr() + std::size_t(i) * y.stride0();
    for (int c = 0; c < cout; ++c)
      std::fill(yi + std::size_t(c) * out_vox, yi + std::size_t(c + 1) * out_vox, b[std::size_t(c)]);
    col2im(cols.data(), g, yi);
  }
  return y;
}

template <class T>
ConvGrads<T> deconv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                               int stride = 2) {
  const ConvGeometry g = detail::deconv_geometry(x, w, stride);
  const int n = x.dim(0);
  const int cin = w.dim(0);
  const int cout = w.dim(1);
  if (dy.shape != Shape{n, cout, g.in_d, g.in_h, g.in_w})
    throw ShapeError("deconv3d gradient shape mismatch");
  ConvGrads<T> grads{Tensor<T>(x.shape), Tensor<T>(w.shape), Tensor<T>({cout})};
  std::vector<T> dcols(g.rows() * g.out_voxels());
  const detail::CMapMat<T> wm(w.ptr(), cin, Eigen::Index(g.rows()));
  detail::MapMat<T> dwm(grads.dw.ptr(), cin, Eigen::Index(g.rows()));
  const detail::CMapMat<T> dcm(dcols.data(), Eigen::Index(g.rows()), Eigen::Index(g.out_voxels()));
  const std::size_t out_vox = g.in_voxels();
  for (int i = 0; i < n; ++i) {
    const T* dyi = dy.ptr() + std::size_t(i) * dy.stride0();
    im2col(dyi, g, dcols.data());
    const detail::CMapMat<T> xm(x.ptr() + std::size_t(i) * x.stride0(), cin,
                                Eigen::Index(g.out_voxels()));
    detail::MapMat<T> dxm(grads.dx.ptr() + std::size_t(i) * x.stride0(), cin,
                          Eigen::Index(g.out_voxels()));
    dxm.noalias() = wm * dcm;
    dwm.noalias() += xm * dcm.transpose();
    for (int c = 0; c < cout; ++c) {
      T s = 0;
      for (std::size_t v = 0; v < out_vox; ++v) s += dyi[std::size_t(c) * out_vox + v];
      grads.db[std::size_t(c)] += s;
    }
  }
  return grads;
}

}  // namespace rgbdpose::nn
