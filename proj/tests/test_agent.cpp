#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcdp/agent.hpp"
#include "fd_check.hpp"

using namespace dcdp;
using namespace dcdp::test;
using D = double;

namespace {

// Brute-force oracle: literal recursive evaluation of
// R_t = r_t + gamma * c_t * ((1 - lambda) * V_{t+1} + lambda * R_{t+1}), R_H = V_H.
double lambda_return_oracle(const std::vector<double>& r, const std::vector<double>& v,
                            const std::vector<double>& c, double gamma, double lam, std::size_t t) {
  if (t == r.size()) return v[t];
  double next = lambda_return_oracle(r, v, c, gamma, lam, t + 1);
  return r[t] + gamma * c[t] * ((1 - lam) * v[t + 1] + lam * next);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.conv_depth = 4;
  cfg.feature_dim = 24;
  cfg.deter_dim = 20;
  cfg.groups = 3;
  cfg.classes = 4;
  cfg.hidden_dim = 16;
  cfg.cdp_hidden = 16;
  cfg.num_actions = 4;
  return cfg;
}

}  // namespace

TEST_CASE("lambda returns match the brute-force recursion on 100 random rollouts") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    int H = 1 + int(rng.below(5));
    std::vector<double> r, v, c;
    for (int i = 0; i < H; ++i) {
      r.push_back(rng.normal());
      c.push_back(rng.uniform());
    }
    for (int i = 0; i <= H; ++i) v.push_back(rng.normal());
    double gamma = 0.9 + 0.099 * rng.uniform();
    double lam = rng.uniform();

    Mat<D> rm(H, 1), vm(H + 1, 1), cm(H, 1);
    for (int i = 0; i < H; ++i) {
      rm(i, 0) = r[std::size_t(i)];
      cm(i, 0) = c[std::size_t(i)];
    }
    for (int i = 0; i <= H; ++i) vm(i, 0) = v[std::size_t(i)];
    Mat<D> ret = lambda_returns(rm, vm, cm, gamma, lam);
    for (int t = 0; t < H; ++t) {
      double oracle = lambda_return_oracle(r, v, c, gamma, lam, std::size_t(t));
      CHECK(std::abs(ret(t, 0) - oracle) < 1e-6);
    }
  }
}

TEST_CASE("lambda return endpoints: one-step bootstrap and Monte-Carlo limit") {
  Mat<D> r(3, 1), v(4, 1), c(3, 1);
  r << 1.0, 0.5, -0.25;
  v << 0.2, 0.4, 0.6, 0.8;
  c << 1, 1, 1;
  double gamma = 0.95;

  Mat<D> lam0 = lambda_returns(r, v, c, gamma, 0.0);
  for (int t = 0; t < 3; ++t)
    CHECK(lam0(t, 0) == doctest::Approx(r(t, 0) + gamma * v(t + 1, 0)).epsilon(1e-12));

  Mat<D> lam1 = lambda_returns(r, v, c, gamma, 1.0);
  for (int t = 0; t < 3; ++t) {
    double mc = 0;
    for (int k = t; k < 3; ++k) mc += std::pow(gamma, k - t) * r(k, 0);
    mc += std::pow(gamma, 3 - t) * v(3, 0);
    CHECK(lam1(t, 0) == doctest::Approx(mc).epsilon(1e-12));
  }
}

TEST_CASE("lambda return hand-unrolled case") {
  // r=(1,0,2), V=(0,0,0,1), gamma=0.9, lambda=0.5, c=1.
  Mat<D> r(3, 1), v(4, 1), c(3, 1);
  r << 1, 0, 2;
  v << 0, 0, 0, 1;
  c << 1, 1, 1;
  Mat<D> ret = lambda_returns<D>(r, v, c, 0.9, 0.5);
  CHECK(ret(2, 0) == doctest::Approx(2.9).epsilon(1e-12));
  CHECK(ret(1, 0) == doctest::Approx(1.305).epsilon(1e-12));
  CHECK(ret(0, 0) == doctest::Approx(1.58725).epsilon(1e-12));
  // Cross-check with the independent recursion.
  std::vector<double> rr{1, 0, 2}, vv{0, 0, 0, 1}, cc{1, 1, 1};
  for (int t = 0; t < 3; ++t)
    CHECK(ret(t, 0) ==
          doctest::Approx(lambda_return_oracle(rr, vv, cc, 0.9, 0.5, std::size_t(t))));
}

TEST_CASE("imagination: horizon contract and determinism under a fixed seed") {
  auto cfg = tiny_config();
  Rng init(11);
  ParamRegistry<D> reg;
  WorldModel<D> wm(cfg, reg, init);
  AgentConfig acfg;
  acfg.hidden_dim = 16;
  ActorCritic<D> policy(acfg, cfg.latent_dim(), cfg.num_actions, reg, init);

  Rng rng(55);
  Mat<D> h = random_mat(cfg.deter_dim, 3, rng);
  Mat<D> z = Mat<D>::Zero(cfg.z_dim(), 3);
  for (Index b = 0; b < 3; ++b)
    for (int g = 0; g < cfg.groups; ++g)
      z(Index(g) * cfg.classes + Index(rng.below(std::uint64_t(cfg.classes))), b) = 1.0;

  CHECK_THROWS_AS(imagine(wm, policy, h, z, 0, rng), std::invalid_argument);

  Rng r1(77), r2(77);
  auto ro1 = imagine(wm, policy, h, z, 1, r1);
  CHECK(ro1.horizon == 1);
  CHECK(ro1.rewards.rows() == 1);
  CHECK(ro1.h_states.cols() == 2 * 3);

  auto ro2 = imagine(wm, policy, h, z, 1, r2);
  CHECK(ro1.h_states == ro2.h_states);
  CHECK(ro1.actions == ro2.actions);
  CHECK(ro1.rewards == ro2.rewards);

  Rng r3(78);
  auto ro3 = imagine(wm, policy, h, z, 7, r3);
  CHECK(ro3.rewards.rows() == 7);
  CHECK(ro3.values.rows() == 8);
  CHECK(ro3.h_states.allFinite());
}

TEST_CASE("policy losses train the policy only; world model stays untouched") {
  auto cfg = tiny_config();
  Rng init(13);
  ParamRegistry<D> reg;
  WorldModel<D> wm(cfg, reg, init);
  AgentConfig acfg;
  acfg.hidden_dim = 16;
  ActorCritic<D> policy(acfg, cfg.latent_dim(), cfg.num_actions, reg, init);

  Rng rng(91);
  // Zero-initialized reward/value heads make every advantage exactly zero;
  // randomize them so the losses have structure.
  for (const char* name :
       {"worldmodel/reward/out/w", "policy/actor/out/w", "policy/critic/out/w"}) {
    Tensor<D>* t = reg.find(name);
    REQUIRE(t != nullptr);
    t->value = random_mat(t->value.rows(), t->value.cols(), rng, 0.5);
  }
  Mat<D> h = random_mat(cfg.deter_dim, 4, rng);
  Mat<D> z = Mat<D>::Zero(cfg.z_dim(), 4);
  for (Index b = 0; b < 4; ++b)
    for (int g = 0; g < cfg.groups; ++g)
      z(Index(g) * cfg.classes + Index(rng.below(std::uint64_t(cfg.classes))), b) = 1.0;
  auto rollout = imagine(wm, policy, h, z, 5, rng);

  reg.zero_grads();
  Tape<D> t;
  auto losses = policy_losses(t, policy, rollout, D(0.997), D(0.95), D(3e-4));
  t.backward(losses.total);

  double wm_grad = 0, policy_grad = 0;
  for (const auto& tensor : reg.tensors()) {
    double g = tensor->grad.cwiseAbs().maxCoeff();
    if (tensor->name.rfind("worldmodel/", 0) == 0) wm_grad = std::max(wm_grad, g);
    if (tensor->name.rfind("policy/", 0) == 0) policy_grad = std::max(policy_grad, g);
  }
  CHECK(wm_grad == 0.0);  // imagination is gradient-isolated from the model
  CHECK(policy_grad > 0.0);

  // Routing check: on a fixed rollout the policy loss does not depend on
  // world-model parameters at all (finite difference is exactly zero).
  Tensor<D>* seq_param = reg.find("worldmodel/seq/gate_h/w");
  REQUIRE(seq_param != nullptr);
  double before = losses.actor_loss + losses.critic_loss;
  seq_param->value.array() += 1e-3;
  Tape<D> t2;
  auto perturbed = policy_losses(t2, policy, rollout, D(0.997), D(0.95), D(3e-4));
  seq_param->value.array() -= 1e-3;
  CHECK(perturbed.actor_loss + perturbed.critic_loss == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("fresh uniform policy attains maximal entropy ln(num_actions)") {
  auto cfg = tiny_config();
  cfg.num_actions = 6;
  Rng init(17);
  ParamRegistry<D> reg;
  WorldModel<D> wm(cfg, reg, init);
  AgentConfig acfg;
  acfg.hidden_dim = 16;
  ActorCritic<D> policy(acfg, cfg.latent_dim(), cfg.num_actions, reg, init);

  Rng rng(3);
  Mat<D> h = random_mat(cfg.deter_dim, 2, rng);
  Mat<D> z = Mat<D>::Zero(cfg.z_dim(), 2);
  for (Index b = 0; b < 2; ++b)
    for (int g = 0; g < cfg.groups; ++g) z(Index(g) * cfg.classes, b) = 1.0;
  auto rollout = imagine(wm, policy, h, z, 3, rng);
  Tape<D> t;
  auto losses = policy_losses(t, policy, rollout, D(0.997), D(0.95), D(3e-4));
  CHECK(losses.entropy == doctest::Approx(std::log(6.0)).epsilon(1e-9));
}

TEST_CASE("greedy act picks the argmax") {
  AgentConfig acfg;
  acfg.hidden_dim = 8;
  Rng init(19);
  ParamRegistry<D> reg;
  ActorCritic<D> policy(acfg, 10, 4, reg, init);
  Mat<D> logits(4, 2);
  logits << 0.1, -3, 2.0, 1, -1, 2, 0.5, -2;
  auto acts = policy.act(logits, nullptr, true);
  CHECK(acts[0] == 1);
  CHECK(acts[1] == 2);
}
