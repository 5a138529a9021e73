#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"

using namespace dcdp;
using namespace dcdp::test;
using D = double;

TEST_CASE("elementwise and affine ops match finite differences") {
  Rng rng(7);
  auto a = make_input("a", random_mat(4, 3, rng));
  auto b = make_input("b", (random_mat(4, 3, rng).array().abs() + 0.5).matrix());
  auto w = make_input("w", random_mat(2, 4, rng));

  auto build = [&](Tape<D>& t) {
    Var<D> va = t.param(a), vb = t.param(b), vw = t.param(w);
    Var<D> x = add(cmul(va, vb), scale(va, 0.3));
    x = cdiv(x, vb);
    x = sub(x, neg(va));
    Var<D> y = matmul(vw, x);
    return mean_all(cmul(y, y));
  };
  auto rep = fd_compare(build, {&a, &b, &w});
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("nonlinearities match finite differences") {
  Rng rng(11);
  auto x = make_input("x", random_mat(5, 4, rng, 0.8));

  auto build = [&](Tape<D>& t) {
    Var<D> v = t.param(x);
    Var<D> y = silu(v) + tanh_(v) + sigmoid(v);
    y = add(y, exp_(scale(v, D(0.5))));
    y = add(y, log_(add_scalar(cmul(v, v), D(1.0))));
    y = add(y, sqrt_(add_scalar(cmul(v, v), D(0.7))));
    return sum_all(y);
  };
  CHECK(fd_compare(build, {&x}).max_rel_err < 1e-6);
}

TEST_CASE("clamp family has pass-through gradient inside and zero outside") {
  Rng rng(13);
  // Keep values away from the clamp edges so FD is valid.
  M xv(2, 3);
  xv << -2.0, 0.3, 1.7, 0.9, -0.4, 2.5;
  auto x = make_input("x", xv);
  auto build = [&](Tape<D>& t) {
    Var<D> v = t.param(x);
    return sum_all(add(clamp(v, D(-1), D(1)), clamp_min(v, D(0.5))));
  };
  CHECK(fd_compare(build, {&x}).max_rel_err < 1e-6);

  x.zero_grad();
  Tape<D> t;
  Var<D> v = t.param(x);
  Var<D> loss = sum_all(clamp_min(v, D(100)));  // everything below the floor
  t.backward(loss);
  CHECK(x.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reductions, broadcasts and slicing match finite differences") {
  Rng rng(17);
  auto x = make_input("x", random_mat(6, 5, rng));
  auto r = make_input("r", random_mat(1, 5, rng));
  auto v = make_input("v", random_mat(6, 1, rng));

  auto build = [&](Tape<D>& t) {
    Var<D> vx = t.param(x), vr = t.param(r), vv = t.param(v);
    Var<D> y = add_colvec(vx, vv);
    y = bcast_rowvec_mul(y, vr);
    Var<D> top = rows(y, 0, 3), bot = rows(y, 3, 3);
    Var<D> rec = concat_rows<D>({top, cmul(bot, bot)});
    Var<D> left = cols(rec, 0, 2), right = cols(rec, 2, 3);
    Var<D> cat = concat_cols<D>({right, left});
    Var<D> s1 = colwise_sum(cat);
    Var<D> s2 = rowwise_sum(cat);
    return add(mean_all(s1), mean_all(cmul(s2, s2)));
  };
  CHECK(fd_compare(build, {&x, &r, &v}).max_rel_err < 1e-6);
}

TEST_CASE("grouped softmax and log-softmax match finite differences") {
  Rng rng(19);
  auto logits = make_input("l", random_mat(6, 4, rng));  // 2 groups x 3 classes
  auto wts = random_mat(6, 4, rng);

  auto build = [&](Tape<D>& t) {
    Var<D> l = t.param(logits);
    Var<D> p = softmax_groups(l, 2, 3);
    Var<D> lp = log_softmax_groups(l, 2, 3);
    return add(sum_all(cmul(p, t.constant(wts))), mean_all(cmul(lp, t.constant(wts))));
  };
  CHECK(fd_compare(build, {&logits}).max_rel_err < 1e-6);

  Tape<D> t;
  Var<D> p = softmax_groups(t.param(logits), 2, 3);
  for (Index b = 0; b < 4; ++b) {
    CHECK(p.value().col(b).segment(0, 3).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.value().col(b).segment(3, 3).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer norm matches finite differences") {
  Rng rng(23);
  auto x = make_input("x", random_mat(7, 3, rng));
  auto gain = make_input("g", (random_mat(7, 1, rng, 0.2).array() + 1.0).matrix());
  auto bias = make_input("b", random_mat(7, 1, rng, 0.2));

  auto build = [&](Tape<D>& t) {
    Var<D> y = layer_norm(t.param(x), t.param(gain), t.param(bias), D(1e-3));
    return mean_all(cmul(y, y));
  };
  CHECK(fd_compare(build, {&x, &gain, &bias}).max_rel_err < 1e-5);
}

TEST_CASE("conv2d matches finite differences") {
  Rng rng(29);
  ConvDims d{2, 6, 6, 3, 4, 2, 1};
  auto x = make_input("x", random_mat(d.in_size(), 2, rng));
  auto w = make_input("w", random_mat(d.out_channels, d.patch(), rng, 0.3));
  auto b = make_input("b", random_mat(d.out_channels, 1, rng, 0.3));

  auto build = [&](Tape<D>& t) {
    Var<D> y = conv2d(t.param(x), t.param(w), t.param(b), d);
    return mean_all(cmul(y, y));
  };
  CHECK(fd_compare(build, {&x, &w, &b}).max_rel_err < 1e-6);
  CHECK(ConvDims{2, 6, 6, 3, 4, 2, 1}.out_h() == 3);
}

TEST_CASE("conv2d_transpose matches finite differences") {
  Rng rng(31);
  ConvDims d{2, 6, 6, 3, 4, 2, 1};  // transpose maps (3ch, 3x3) -> (2ch, 6x6)
  auto x = make_input("x", random_mat(d.out_size(), 2, rng));
  auto w = make_input("w", random_mat(d.out_channels, d.patch(), rng, 0.3));
  auto b = make_input("b", random_mat(d.in_channels, 1, rng, 0.3));

  auto build = [&](Tape<D>& t) {
    Var<D> y = conv2d_transpose(t.param(x), t.param(w), t.param(b), d);
    return mean_all(cmul(y, y));
  };
  CHECK(fd_compare(build, {&x, &w, &b}).max_rel_err < 1e-6);
}

TEST_CASE("conv2d_transpose inverts conv2d geometry") {
  Rng rng(37);
  ConvDims d{3, 8, 8, 5, 4, 2, 1};
  Tape<D> t;
  Var<D> img = t.constant(random_mat(d.in_size(), 1, rng));
  auto w = make_input("w", random_mat(d.out_channels, d.patch(), rng));
  auto b = make_input("b", M::Zero(d.out_channels, 1));
  auto b2 = make_input("b2", M::Zero(d.in_channels, 1));
  Var<D> down = conv2d(img, t.param(w), t.param(b), d);
  CHECK(down.rows() == d.out_size());
  Var<D> up = conv2d_transpose(down, t.param(w), t.param(b2), d);
  CHECK(up.rows() == d.in_size());
}

TEST_CASE("stop_grad blocks gradient but passes value") {
  Rng rng(41);
  auto x = make_input("x", random_mat(3, 2, rng));
  Tape<D> t;
  Var<D> v = t.param(x);
  Var<D> frozen = stop_grad(v);
  CHECK(frozen.value() == x.value);
  Var<D> loss = sum_all(cmul(frozen, v));
  t.backward(loss);
  // d/dv of sum(sg(v) * v) is sg(v), not 2v.
  CHECK((x.grad - x.value).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("straight-through sample: hard value, soft-probability gradient") {
  // 1 group, 3 classes: the sampled one-hot must equal the hard sample in
  // value while its gradient wrt logits equals the softmax-probs gradient.
  M lv(3, 1);
  lv << 0.2, -0.4, 0.9;
  auto logits = make_input("logits", lv);
  M downstream(3, 1);
  downstream << 1.3, -0.7, 0.5;

  M hard = M::Zero(3, 1);
  hard(2, 0) = 1.0;  // fixed draw

  auto build_st = [&](Tape<D>& t) {
    Var<D> probs = softmax_groups(t.param(logits), 1, 3);
    Var<D> st = add(probs, stop_grad(sub(t.constant(hard), probs)));
    return sum_all(cmul(st, t.constant(downstream)));
  };
  Tape<D> t;
  Var<D> probs = softmax_groups(t.param(logits), 1, 3);
  Var<D> st = add(probs, stop_grad(sub(t.constant(hard), probs)));
  CHECK(st.value() == hard);  // forward equals the hard sample exactly
  t.backward(sum_all(cmul(st, t.constant(downstream))));
  M analytic = logits.grad;

  // Oracle: finite differences of the soft path sum(probs * downstream).
  auto soft_loss = [&](const M& l) {
    Tape<D> tt;
    Var<D> p = softmax_groups(tt.constant(l), 1, 3);
    return sum_all(cmul(p, tt.constant(downstream))).scalar();
  };
  double h = 1e-6;
  for (Index i = 0; i < 3; ++i) {
    M up = lv, dn = lv;
    up(i, 0) += h;
    dn(i, 0) -= h;
    double numeric = (soft_loss(up) - soft_loss(dn)) / (2 * h);
    CHECK(analytic(i, 0) == doctest::Approx(numeric).epsilon(1e-5));
  }
  (void)build_st;
}

TEST_CASE("shared parameter mounted twice accumulates both paths") {
  Rng rng(43);
  auto w = make_input("w", random_mat(3, 3, rng));
  auto x1 = make_input("x1", random_mat(3, 2, rng));
  auto x2 = make_input("x2", random_mat(3, 2, rng));
  auto build = [&](Tape<D>& t) {
    Var<D> vw = t.param(w);
    Var<D> y = add(matmul(vw, t.param(x1)), matmul(vw, matmul(vw, t.param(x2))));
    return mean_all(cmul(y, y));
  };
  CHECK(fd_compare(build, {&w, &x1, &x2}).max_rel_err < 1e-6);
}

TEST_CASE("frozen tape mounts parameters as constants") {
  Rng rng(47);
  auto w = make_input("w", random_mat(3, 3, rng));
  Tape<D> t;
  t.set_params_frozen(true);
  Var<D> vw = t.param(w);
  CHECK_FALSE(t.needs_grad(vw));
  Var<D> loss = sum_all(cmul(vw, vw));
  t.backward(loss);
  CHECK(w.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("composite network block matches finite differences") {
  Rng rng(53);
  ParamRegistry<D> reg;
  GruCell<D> cell(reg, "gru", 4, 3, 8, 6, rng);
  Mlp<D> mlp(reg, "mlp", 6, 8, 1, 2, rng);

  M h0 = random_mat(6, 5, rng, 0.4);
  M z0 = random_mat(4, 5, rng, 0.4);
  M a0 = random_mat(3, 5, rng, 0.4);

  auto build = [&](Tape<D>& t) {
    Var<D> h = cell.step(t.constant(h0), t.constant(z0), t.constant(a0));
    h = cell.step(h, t.constant(z0), t.constant(a0));
    return mean_all(cmul(mlp(h), mlp(h)));
  };
  std::vector<Tensor<D>*> params;
  for (const auto& t : reg.tensors()) params.push_back(t.get());
  CHECK(fd_compare(build, params).max_rel_err < 1e-4);
}
