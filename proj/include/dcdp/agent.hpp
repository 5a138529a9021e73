#pragma once

#include "dcdp/world_model.hpp"

namespace dcdp {

struct AgentConfig {
  int hidden_dim = 256;
  int hidden_layers = 1;
  double gamma = 0.997;
  double lam = 0.95;
  double entropy_coef = 3e-4;
  int horizon = 15;
};

/// Policy and value heads over the latent state [h; z]. Output layers are
/// zero-initialized, so the fresh policy is exactly uniform.
template <typename S>
class ActorCritic {
 public:
  ActorCritic(const AgentConfig& cfg, Index latent_dim, int num_actions, ParamRegistry<S>& reg,
              Rng& rng)
      : actor_(reg, "policy/actor", latent_dim, cfg.hidden_dim, cfg.hidden_layers, num_actions,
               rng, Init::Zeros),
        critic_(reg, "policy/critic", latent_dim, cfg.hidden_dim, cfg.hidden_layers, 1, rng,
                Init::Zeros),
        num_actions_(num_actions) {}

  Var<S> actor_logits(Var<S> latent) const { return actor_(latent); }
  Var<S> critic_value(Var<S> latent) const { return critic_(latent); }
  int num_actions() const { return num_actions_; }

  /// Sample (or argmax) an action per column from the actor.
  std::vector<int> act(const Mat<S>& logits, Rng* rng, bool greedy) const {
    std::vector<int> actions(std::size_t(logits.cols()));
    for (Index b = 0; b < logits.cols(); ++b) {
      if (greedy) {
        Index pick = 0;
        logits.col(b).maxCoeff(&pick);
        actions[std::size_t(b)] = int(pick);
      } else {
        Vec<S> p = (logits.col(b).array() - logits.col(b).maxCoeff()).exp();
        actions[std::size_t(b)] = rng->categorical(p);
      }
    }
    return actions;
  }

 private:
  Mlp<S> actor_;
  Mlp<S> critic_;
  int num_actions_;
};

/// Latent-only rollout produced by the frozen world model and the current
/// policy. No observations are consumed past the seed states.
template <typename S>
struct ImaginedRollout {
  Mat<S> h_states;  // deter_dim x ((H+1)*N), column k*N + i
  Mat<S> z_states;  // z_dim x ((H+1)*N)
  Mat<S> actions;   // num_actions x (H*N), one-hot taken at s_k
  Mat<S> rewards;   // H x N, reward predicted at s_{k+1}
  Mat<S> conts;     // H x N, continuation probability at s_{k+1}
  Mat<S> values;    // (H+1) x N critic values
  int horizon = 0;
  int n = 0;
};

/// Roll the prior forward from posterior seed states. World-model parameters
/// are mounted frozen; nothing here can write gradients into them.
template <typename S>
ImaginedRollout<S> imagine(const WorldModel<S>& wm, const ActorCritic<S>& policy,
                           const Mat<S>& h_seed, const Mat<S>& z_seed, int horizon, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("imagine: horizon must be >= 1");
  const int N = int(h_seed.cols());
  const int A = policy.num_actions();
  Tape<S> t;
  t.set_params_frozen(true);

  ImaginedRollout<S> out;
  out.horizon = horizon;
  out.n = N;
  out.h_states.resize(h_seed.rows(), Index(horizon + 1) * N);
  out.z_states.resize(z_seed.rows(), Index(horizon + 1) * N);
  out.actions = Mat<S>::Zero(A, Index(horizon) * N);
  out.rewards.resize(horizon, N);
  out.conts.resize(horizon, N);
  out.values.resize(horizon + 1, N);

  Var<S> h = t.constant(h_seed);
  Var<S> z = t.constant(z_seed);
  for (int k = 0; k <= horizon; ++k) {
    out.h_states.middleCols(Index(k) * N, N) = h.value();
    out.z_states.middleCols(Index(k) * N, N) = z.value();
    Var<S> latent = concat_rows<S>({h, z});
    out.values.row(k) = policy.critic_value(latent).value().row(0);
    if (k == horizon) break;

    Mat<S> logits = policy.actor_logits(latent).value();
    std::vector<int> acts = policy.act(logits, &rng, false);
    Mat<S> a_onehot = Mat<S>::Zero(A, N);
    for (int i = 0; i < N; ++i) a_onehot(acts[std::size_t(i)], i) = S(1);
    out.actions.middleCols(Index(k) * N, N) = a_onehot;

    h = wm.sequence_step(t, h, z, t.constant(a_onehot));
    z = wm.predict_prior(t, h, &rng).sample;
    Var<S> next_latent = concat_rows<S>({h, z});
    Mat<S> r = wm.reward_symlog_mean(t, next_latent).value();
    for (int i = 0; i < N; ++i) out.rewards(k, i) = symexp(r(0, i));
    out.conts.row(k) = wm.cont_prob(t, next_latent).value().row(0);
  }
  return out;
}

/// lambda-returns via the backward recursion
/// R_t = r_t + gamma * c_t * ((1 - lambda) * V_{t+1} + lambda * R_{t+1}),
/// with R_H = V_H.
template <typename S>
Mat<S> lambda_returns(const Mat<S>& rewards, const Mat<S>& values, const Mat<S>& conts, S gamma,
                      S lam) {
  const Index H = rewards.rows(), N = rewards.cols();
  Mat<S> ret(H, N);
  RowVec<S> next = values.row(H);
  for (Index k = H - 1; k >= 0; --k) {
    ret.row(k) = rewards.row(k).array() +
                 gamma * conts.row(k).array() *
                     ((S(1) - lam) * values.row(k + 1).array() + lam * next.array());
    next = ret.row(k);
  }
  return ret;
}

template <typename S>
struct PolicyLosses {
  Var<S> total;
  S actor_loss = 0;
  S critic_loss = 0;
  S entropy = 0;
};

/// REINFORCE-with-baseline actor loss plus lambda-return critic regression.
/// States enter as constants: by construction no gradient can reach the world
/// model from here.
template <typename S>
PolicyLosses<S> policy_losses(Tape<S>& t, const ActorCritic<S>& policy,
                              const ImaginedRollout<S>& ro, S gamma, S lam, S entropy_coef) {
  const int H = ro.horizon, N = ro.n;
  const int A = policy.num_actions();
  Mat<S> returns = lambda_returns(ro.rewards, ro.values, ro.conts, gamma, lam);

  // Weight each step by the probability the trajectory is still live.
  Mat<S> weights(H, N);
  RowVec<S> alive = RowVec<S>::Ones(N);
  for (int k = 0; k < H; ++k) {
    weights.row(k) = alive;
    alive = alive.cwiseProduct(ro.conts.row(k));
  }
  S weight_sum = weights.sum();
  if (weight_sum <= S(0)) weight_sum = S(1);

  // Flatten step-major to match the rollout's state layout.
  Mat<S> adv_w(1, Index(H) * N), w_row(1, Index(H) * N), ret_row(1, Index(H) * N);
  for (int k = 0; k < H; ++k) {
    for (int i = 0; i < N; ++i) {
      Index c = Index(k) * N + i;
      adv_w(0, c) = (returns(k, i) - ro.values(k, i)) * weights(k, i);
      w_row(0, c) = weights(k, i);
      ret_row(0, c) = returns(k, i);
    }
  }

  Mat<S> s(ro.h_states.rows() + ro.z_states.rows(), Index(H) * N);
  s.topRows(ro.h_states.rows()) = ro.h_states.leftCols(Index(H) * N);
  s.bottomRows(ro.z_states.rows()) = ro.z_states.leftCols(Index(H) * N);
  Var<S> states = t.constant(std::move(s));

  Var<S> logits = policy.actor_logits(states);
  Var<S> lsm = log_softmax_groups(logits, 1, A);
  Var<S> logp = colwise_sum(cmul(lsm, t.constant(ro.actions)));
  Var<S> probs = exp_(lsm);
  Var<S> ent = neg(colwise_sum(cmul(probs, lsm)));

  Var<S> pg = sum_all(cmul(logp, t.constant(adv_w)));
  Var<S> ent_sum = sum_all(cmul(ent, t.constant(w_row)));
  Var<S> actor_loss =
      scale(add(pg, scale(ent_sum, S(entropy_coef))), S(-1) / weight_sum);

  Var<S> value = policy.critic_value(states);
  Var<S> diff = sub(value, t.constant(ret_row));
  Var<S> critic_loss =
      scale(sum_all(cmul(cmul(diff, diff), t.constant(w_row))), S(0.5) / weight_sum);

  PolicyLosses<S> out;
  out.actor_loss = actor_loss.scalar();
  out.critic_loss = critic_loss.scalar();
  out.entropy = ent_sum.scalar() / weight_sum;
  out.total = add(actor_loss, critic_loss);
  if (!std::isfinite(double(out.actor_loss)) || !std::isfinite(double(out.critic_loss)))
    throw NumericalError("non-finite policy loss");
  return out;
}

}  // namespace dcdp
