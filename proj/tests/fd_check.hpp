#pragma once

// Central-difference gradient oracle used to validate tape gradients. Kept
// independent of the autodiff backward path: it only re-runs forward passes.

#include <functional>
#include <vector>

#include "dcdp/nn.hpp"

namespace dcdp::test {

using M = Mat<double>;
using BuildFn = std::function<Var<double>(Tape<double>&)>;

inline double eval_loss(const BuildFn& build) {
  Tape<double> tape;
  return build(tape).scalar();
}

struct FdReport {
  double max_rel_err = 0;
  double max_abs_err = 0;
};

/// Analytic gradient (via one backward) vs central differences for every
/// entry of every listed tensor.
inline FdReport fd_compare(const BuildFn& build, const std::vector<Tensor<double>*>& inputs,
                           double h = 1e-5) {
  for (auto* t : inputs) t->zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = build(tape);
    tape.backward(loss);
  }
  FdReport rep;
  for (auto* t : inputs) {
    for (Index i = 0; i < t->value.size(); ++i) {
      double saved = t->value.data()[i];
      t->value.data()[i] = saved + h;
      double up = eval_loss(build);
      t->value.data()[i] = saved - h;
      double down = eval_loss(build);
      t->value.data()[i] = saved;
      double numeric = (up - down) / (2 * h);
      double analytic = t->grad.data()[i];
      double abs_err = std::abs(numeric - analytic);
      double rel = abs_err / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
    }
  }
  return rep;
}

inline M random_mat(Index r, Index c, Rng& rng, double scl = 1.0) {
  M m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scl;
  return m;
}

inline Tensor<double> make_input(const std::string& name, const M& v) {
  Tensor<double> t(name, v.rows(), v.cols());
  t.value = v;
  return t;
}

}  // namespace dcdp::test
