#pragma once

#include <memory>

#include "dcdp/ops.hpp"

namespace dcdp {

/// Geometry of a strided convolution. Images are stored one per column,
/// channel-major: index = (c * H + y) * W + x.
struct ConvDims {
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int patch() const { return in_channels * kernel * kernel; }
  int out_positions() const { return out_h() * out_w(); }
  Index in_size() const { return Index(in_channels) * in_h * in_w; }
  Index out_size() const { return Index(out_channels) * out_positions(); }
};

namespace detail {

// col is patch() x out_positions(), column-major.
template <typename S>
void im2col(const S* img, const ConvDims& d, S* col) {
  const int oh = d.out_h(), ow = d.out_w(), K = d.patch();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      S* dst = col + Index(oy * ow + ox) * K;
      for (int c = 0; c < d.in_channels; ++c) {
        for (int ky = 0; ky < d.kernel; ++ky) {
          int iy = oy * d.stride - d.pad + ky;
          for (int kx = 0; kx < d.kernel; ++kx) {
            int ix = ox * d.stride - d.pad + kx;
            bool in = iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w;
            *dst++ = in ? img[(Index(c) * d.in_h + iy) * d.in_w + ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, const ConvDims& d, S* img) {
  const int oh = d.out_h(), ow = d.out_w(), K = d.patch();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const S* src = col + Index(oy * ow + ox) * K;
      for (int c = 0; c < d.in_channels; ++c) {
        for (int ky = 0; ky < d.kernel; ++ky) {
          int iy = oy * d.stride - d.pad + ky;
          for (int kx = 0; kx < d.kernel; ++kx) {
            int ix = ox * d.stride - d.pad + kx;
            if (iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w)
              img[(Index(c) * d.in_h + iy) * d.in_w + ix] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Strided convolution over a batch of flattened images (one per column).
/// w is out_channels x patch, b is out_channels x 1.
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, const ConvDims& d) {
  Tape<S>& t = *x.tape;
  const Mat<S>& xv = x.value();
  const Index batch = xv.cols();
  const int P = d.out_positions();
  const int K = d.patch();

  auto cols_all = std::make_shared<Mat<S>>(K, Index(P) * batch);
  for (Index i = 0; i < batch; ++i)
    detail::im2col(xv.col(i).data(), d, cols_all->data() + Index(P) * i * K);

  Mat<S> out_flat = w.value() * (*cols_all);  // out_channels x (P*batch)
  Mat<S> out(d.out_size(), batch);
  for (Index i = 0; i < batch; ++i) {
    Eigen::Map<Mat<S>> dst(out.col(i).data(), P, d.out_channels);
    dst = out_flat.middleCols(Index(P) * i, P).transpose();
    dst.array().rowwise() += b.value().col(0).transpose().array();
  }

  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  int ix = x.id, iw = w.id, ib = b.id;
  return t.make(std::move(out), ng, [ix, iw, ib, d, cols_all](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Index batch = g.cols();
    const int P = d.out_positions();
    Mat<S> g_flat(d.out_channels, Index(P) * batch);
    for (Index i = 0; i < batch; ++i) {
      Eigen::Map<const Mat<S>> src(g.col(i).data(), P, d.out_channels);
      g_flat.middleCols(Index(P) * i, P) = src.transpose();
    }
    t.acc_grad(ib, g_flat.rowwise().sum());
    if (t.needs_grad(Var<S>{&t, iw})) t.acc_grad(iw, g_flat * cols_all->transpose());
    if (t.needs_grad(Var<S>{&t, ix})) {
      Mat<S> dcols = t.node(iw).value.transpose() * g_flat;
      Mat<S>& dx = t.grad_ref(ix);
      for (Index i = 0; i < batch; ++i)
        detail::col2im_add(dcols.data() + Index(P) * i * d.patch(), d, dx.col(i).data());
    }
  });
}

/// Transposed (fractionally strided) convolution. `d` describes the mirror
/// convolution: d.in_* is the LARGE output side of this op, d.out_channels is
/// the channel count of this op's input. w is d.out_channels x patch,
/// b is d.in_channels x 1 (bias on the large side).
template <typename S>
Var<S> conv2d_transpose(Var<S> x, Var<S> w, Var<S> b, const ConvDims& d) {
  Tape<S>& t = *x.tape;
  const Mat<S>& xv = x.value();
  const Index batch = xv.cols();
  const int P = d.out_positions();  // positions of the small side
  const int K = d.patch();

  Mat<S> x_flat(d.out_channels, Index(P) * batch);
  for (Index i = 0; i < batch; ++i) {
    Eigen::Map<const Mat<S>> src(xv.col(i).data(), P, d.out_channels);
    x_flat.middleCols(Index(P) * i, P) = src.transpose();
  }
  Mat<S> cols = w.value().transpose() * x_flat;  // K x (P*batch)
  Mat<S> out = Mat<S>::Zero(d.in_size(), batch);
  for (Index i = 0; i < batch; ++i) {
    detail::col2im_add(cols.data() + Index(P) * i * K, d, out.col(i).data());
    Eigen::Map<Mat<S>> img(out.col(i).data(), Index(d.in_h) * d.in_w, d.in_channels);
    img.array().rowwise() += b.value().col(0).transpose().array();
  }

  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  int ix = x.id, iw = w.id, ib = b.id;
  auto x_flat_sp = std::make_shared<Mat<S>>(std::move(x_flat));
  return t.make(std::move(out), ng, [ix, iw, ib, d, x_flat_sp](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Index batch = g.cols();
    const int P = d.out_positions();
    const int K = d.patch();
    Mat<S> gcols(K, Index(P) * batch);
    for (Index i = 0; i < batch; ++i)
      detail::im2col(g.col(i).data(), d, gcols.data() + Index(P) * i * K);
    if (t.needs_grad(Var<S>{&t, ib})) {
      Mat<S> db = Mat<S>::Zero(d.in_channels, 1);
      for (Index i = 0; i < batch; ++i) {
        Eigen::Map<const Mat<S>> img(g.col(i).data(), Index(d.in_h) * d.in_w, d.in_channels);
        db.col(0) += img.colwise().sum().transpose();
      }
      t.acc_grad(ib, db);
    }
    if (t.needs_grad(Var<S>{&t, iw})) t.acc_grad(iw, *x_flat_sp * gcols.transpose());
    if (t.needs_grad(Var<S>{&t, ix})) {
      Mat<S> dx_flat = t.node(iw).value * gcols;  // out_channels x (P*batch)
      Mat<S>& dx = t.grad_ref(ix);
      for (Index i = 0; i < batch; ++i) {
        Eigen::Map<Mat<S>> dst(dx.col(i).data(), P, d.out_channels);
        dst += dx_flat.middleCols(Index(P) * i, P).transpose();
      }
    }
  });
}

}  // namespace dcdp
