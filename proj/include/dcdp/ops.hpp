#pragma once

#include <cmath>
#include <initializer_list>
#include <memory>
#include <vector>

#include "dcdp/tape.hpp"

namespace dcdp {

// ---------------------------------------------------------------------------
// elementwise and affine ops

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int ia = a.id, ib = b.id;
  return t.make(a.value() + b.value(), ng, [ia, ib](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.acc_grad(ia, g);
    t.acc_grad(ib, g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int ia = a.id, ib = b.id;
  return t.make(a.value() - b.value(), ng, [ia, ib](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.acc_grad(ia, g);
    t.acc_grad(ib, -g);
  });
}

template <typename S>
Var<S> neg(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(-a.value(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    t.acc_grad(ia, -t.node(self).grad);
  });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value() * c, t.needs_grad(a), [ia, c](Tape<S>& t, int self) {
    t.acc_grad(ia, t.node(self).grad * c);
  });
}

template <typename S>
Var<S> add_scalar(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array() + c, t.needs_grad(a), [ia](Tape<S>& t, int self) {
    t.acc_grad(ia, t.node(self).grad);
  });
}

template <typename S>
Var<S> cmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int ia = a.id, ib = b.id;
  return t.make(a.value().cwiseProduct(b.value()), ng, [ia, ib](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.acc_grad(ia, g.cwiseProduct(t.node(ib).value));
    t.acc_grad(ib, g.cwiseProduct(t.node(ia).value));
  });
}

template <typename S>
Var<S> cdiv(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int ia = a.id, ib = b.id;
  return t.make(a.value().cwiseQuotient(b.value()), ng, [ia, ib](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Mat<S>& bv = t.node(ib).value;
    const Mat<S>& y = t.node(self).value;
    t.acc_grad(ia, g.cwiseQuotient(bv));
    t.acc_grad(ib, -(g.cwiseProduct(y).cwiseQuotient(bv)));
  });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int ia = a.id, ib = b.id;
  return t.make(a.value() * b.value(), ng, [ia, ib](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    if (t.needs_grad(Var<S>{&t, ia})) t.acc_grad(ia, g * t.node(ib).value.transpose());
    if (t.needs_grad(Var<S>{&t, ib})) t.acc_grad(ib, t.node(ia).value.transpose() * g);
  });
}

/// Broadcast-add a column vector across all columns.
template <typename S>
Var<S> add_colvec(Var<S> a, Var<S> v) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(v);
  int ia = a.id, iv = v.id;
  return t.make(a.value().colwise() + Vec<S>(v.value()), ng, [ia, iv](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.acc_grad(ia, g);
    t.acc_grad(iv, g.rowwise().sum());
  });
}

/// Broadcast-multiply a 1-row vector across all rows.
template <typename S>
Var<S> bcast_rowvec_mul(Var<S> a, Var<S> r) {
  Tape<S>& t = *a.tape;
  bool ng = t.needs_grad(a) || t.needs_grad(r);
  int ia = a.id, ir = r.id;
  Mat<S> out = a.value().array().rowwise() * a.tape->value(r).row(0).array();
  return t.make(std::move(out), ng, [ia, ir](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Mat<S>& av = t.node(ia).value;
    const Mat<S>& rv = t.node(ir).value;
    t.acc_grad(ia, g.array().rowwise() * rv.row(0).array());
    t.acc_grad(ir, g.cwiseProduct(av).colwise().sum());
  });
}

// ---------------------------------------------------------------------------
// structure ops

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  Tape<S>& t = *parts.front().tape;
  Index total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    total += p.rows();
    ng = ng || t.needs_grad(p);
  }
  Mat<S> out(total, parts.front().cols());
  std::vector<int> ids;
  std::vector<Index> offs;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id);
    offs.push_back(off);
    off += p.rows();
  }
  return t.make(std::move(out), ng, [ids, offs](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Index r = t.node(ids[i]).value.rows();
      t.acc_grad(ids[i], g.middleRows(offs[i], r));
    }
  });
}

template <typename S>
Var<S> concat_rows(std::initializer_list<Var<S>> parts) {
  return concat_rows(std::vector<Var<S>>(parts));
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  Tape<S>& t = *parts.front().tape;
  Index total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    total += p.cols();
    ng = ng || t.needs_grad(p);
  }
  Mat<S> out(parts.front().rows(), total);
  std::vector<int> ids;
  std::vector<Index> offs;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id);
    offs.push_back(off);
    off += p.cols();
  }
  return t.make(std::move(out), ng, [ids, offs](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Index c = t.node(ids[i]).value.cols();
      t.acc_grad(ids[i], g.middleCols(offs[i], c));
    }
  });
}

template <typename S>
Var<S> rows(Var<S> a, Index r0, Index n) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().middleRows(r0, n), t.needs_grad(a), [ia, r0, n](Tape<S>& t, int self) {
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    t.grad_ref(ia).middleRows(r0, n) += t.node(self).grad;
  });
}

template <typename S>
Var<S> cols(Var<S> a, Index c0, Index n) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().middleCols(c0, n), t.needs_grad(a), [ia, c0, n](Tape<S>& t, int self) {
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    t.grad_ref(ia).middleCols(c0, n) += t.node(self).grad;
  });
}

/// Value passes through, gradient does not.
template <typename S>
Var<S> stop_grad(Var<S> a) {
  return a.tape->constant(a.value());
}

// ---------------------------------------------------------------------------
// nonlinearities

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Mat<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return t.make(std::move(out), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const auto& y = t.node(self).value.array();
    t.acc_grad(ia, (t.node(self).grad.array() * y * (S(1) - y)).matrix());
  });
}

template <typename S>
Var<S> tanh_(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array().tanh().matrix(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const auto& y = t.node(self).value.array();
    t.acc_grad(ia, (t.node(self).grad.array() * (S(1) - y * y)).matrix());
  });
}

template <typename S>
Var<S> silu(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> sig = S(1) / (S(1) + (-a.value().array()).exp());
  return t.make((a.value().array() * sig).matrix(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const auto& x = t.node(ia).value.array();
    auto s = S(1) / (S(1) + (-x).exp());
    t.acc_grad(ia, (t.node(self).grad.array() * s * (S(1) + x * (S(1) - s))).matrix());
  });
}

template <typename S>
Var<S> exp_(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array().exp().matrix(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    t.acc_grad(ia, t.node(self).grad.cwiseProduct(t.node(self).value));
  });
}

template <typename S>
Var<S> log_(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array().log().matrix(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    t.acc_grad(ia, t.node(self).grad.cwiseQuotient(t.node(ia).value));
  });
}

template <typename S>
Var<S> sqrt_(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array().sqrt().matrix(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const auto& y = t.node(self).value.array();
    auto denom = (y > S(0)).select(S(2) * y, S(1));
    auto mask = (y > S(0)).template cast<S>();
    t.acc_grad(ia, (t.node(self).grad.array() * mask / denom).matrix());
  });
}

template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Mat<S> out = a.value().array().max(lo).min(hi).matrix();
  return t.make(std::move(out), t.needs_grad(a), [ia, lo, hi](Tape<S>& t, int self) {
    const auto& x = t.node(ia).value.array();
    auto mask = (x >= lo && x <= hi).template cast<S>();
    t.acc_grad(ia, (t.node(self).grad.array() * mask).matrix());
  });
}

/// max(a, c) elementwise; gradient is zero wherever a < c (free-bits style).
template <typename S>
Var<S> clamp_min(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().array().max(c).matrix(), t.needs_grad(a), [ia, c](Tape<S>& t, int self) {
    const auto& x = t.node(ia).value.array();
    auto mask = (x >= c).template cast<S>();
    t.acc_grad(ia, (t.node(self).grad.array() * mask).matrix());
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.make(std::move(out), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    t.grad_ref(ia).array() += t.node(self).grad(0, 0);
  });
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  S inv = S(1) / S(a.value().size());
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum() * inv;
  return t.make(std::move(out), t.needs_grad(a), [ia, inv](Tape<S>& t, int self) {
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    t.grad_ref(ia).array() += t.node(self).grad(0, 0) * inv;
  });
}

/// Sum over the feature (row) dimension: R x B -> 1 x B.
template <typename S>
Var<S> colwise_sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().colwise().sum(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    Index r = t.node(ia).value.rows();
    t.acc_grad(ia, g.replicate(r, 1));
  });
}

/// Sum over the batch (column) dimension: R x B -> R x 1.
template <typename S>
Var<S> rowwise_sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.make(a.value().rowwise().sum(), t.needs_grad(a), [ia](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    Index c = t.node(ia).value.cols();
    t.acc_grad(ia, g.replicate(1, c));
  });
}

// ---------------------------------------------------------------------------
// grouped softmax (logits stacked as G groups of C classes per column)

template <typename S>
Var<S> softmax_groups(Var<S> a, int groups, int classes) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Mat<S> out = a.value();
  for (Index b = 0; b < out.cols(); ++b) {
    for (int g = 0; g < groups; ++g) {
      auto seg = out.col(b).segment(Index(g) * classes, classes);
      seg.array() -= seg.maxCoeff();
      seg = seg.array().exp();
      seg /= seg.sum();
    }
  }
  return t.make(std::move(out), t.needs_grad(a), [ia, groups, classes](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Mat<S>& p = t.node(self).value;
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    Mat<S>& dx = t.grad_ref(ia);
    for (Index b = 0; b < p.cols(); ++b) {
      for (int k = 0; k < groups; ++k) {
        auto pseg = p.col(b).segment(Index(k) * classes, classes);
        auto gseg = g.col(b).segment(Index(k) * classes, classes);
        S dot = pseg.dot(gseg);
        dx.col(b).segment(Index(k) * classes, classes).array() +=
            pseg.array() * (gseg.array() - dot);
      }
    }
  });
}

template <typename S>
Var<S> log_softmax_groups(Var<S> a, int groups, int classes) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  Mat<S> out = a.value();
  for (Index b = 0; b < out.cols(); ++b) {
    for (int g = 0; g < groups; ++g) {
      auto seg = out.col(b).segment(Index(g) * classes, classes);
      S m = seg.maxCoeff();
      S lse = std::log((seg.array() - m).exp().sum()) + m;
      seg.array() -= lse;
    }
  }
  return t.make(std::move(out), t.needs_grad(a), [ia, groups, classes](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Mat<S>& y = t.node(self).value;
    if (!t.needs_grad(Var<S>{&t, ia})) return;
    Mat<S>& dx = t.grad_ref(ia);
    for (Index b = 0; b < y.cols(); ++b) {
      for (int k = 0; k < groups; ++k) {
        auto yseg = y.col(b).segment(Index(k) * classes, classes);
        auto gseg = g.col(b).segment(Index(k) * classes, classes);
        S gsum = gseg.sum();
        dx.col(b).segment(Index(k) * classes, classes).array() +=
            gseg.array() - yseg.array().exp() * gsum;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// layer norm (per column over all rows, affine)

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps) {
  Tape<S>& t = *x.tape;
  int ix = x.id, ig = gain.id, ib = bias.id;
  bool ng = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  const Mat<S>& xv = x.value();
  Index r = xv.rows(), c = xv.cols();
  auto xhat = std::make_shared<Mat<S>>(r, c);
  auto inv_std = std::make_shared<RowVec<S>>(c);
  Mat<S> out(r, c);
  for (Index j = 0; j < c; ++j) {
    S mu = xv.col(j).mean();
    S var = (xv.col(j).array() - mu).square().sum() / S(r);
    S is = S(1) / std::sqrt(var + eps);
    (*inv_std)(j) = is;
    xhat->col(j) = (xv.col(j).array() - mu) * is;
    out.col(j) = xhat->col(j).cwiseProduct(gain.value().col(0)) + bias.value().col(0);
  }
  return t.make(std::move(out), ng, [ix, ig, ib, xhat, inv_std](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    Index r = xhat->rows(), c = xhat->cols();
    t.acc_grad(ib, g.rowwise().sum());
    t.acc_grad(ig, g.cwiseProduct(*xhat).rowwise().sum());
    if (!t.needs_grad(Var<S>{&t, ix})) return;
    const Mat<S>& gain_v = t.node(ig).value;
    Mat<S>& dx = t.grad_ref(ix);
    for (Index j = 0; j < c; ++j) {
      Vec<S> dxhat = g.col(j).cwiseProduct(gain_v.col(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(xhat->col(j)).mean();
      dx.col(j).array() +=
          (*inv_std)(j) * (dxhat.array() - m1 - xhat->col(j).array() * m2);
    }
    (void)r;
  });
}

}  // namespace dcdp
