#pragma once

#include <sstream>
#include <vector>

#include "dcdp/world_model.hpp"

namespace dcdp {

template <typename S>
struct LossWeights {
  S cdp = S(500);
  S aux = S(1);
  S dyn = S(1);
  S rep = S(0.1);
  S recon = S(0);
  S action = S(0);
};

template <typename S>
struct LossBreakdown {
  S cdp = 0;
  S aux_reward = 0;
  S aux_cont = 0;
  S dyn = 0;
  S rep = 0;
  S recon = 0;
  S action = 0;
  S total = 0;
  // diagnostics
  S raw_kl = 0;
  S cos_mean = 0;
  S u_var = 0;
  bool collapse_warning = false;
};

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

/// Per-column cosine similarity with an epsilon floor on the norm product, so
/// degenerate zero embeddings yield 0 rather than NaN.
template <typename S>
Var<S> cosine_cols(Var<S> a, Var<S> b, S eps = S(1e-8)) {
  Var<S> dot = colwise_sum(cmul(a, b));
  Var<S> na = sqrt_(add_scalar(colwise_sum(cmul(a, a)), S(1e-30)));
  Var<S> nb = sqrt_(add_scalar(colwise_sum(cmul(b, b)), S(1e-30)));
  return cdiv(dot, clamp_min(cmul(na, nb), eps));
}

/// L_CDP over a whole time-major batch: -sum_t mean_b cos(SG(u_t), u_hat_t).
/// The stop-gradient on targets is applied here.
template <typename S>
Var<S> cdp_loss_cols(Var<S> u_all, Var<S> u_hat_all, int length) {
  Var<S> cos = cosine_cols(stop_grad(u_all), u_hat_all);
  return scale(mean_all(cos), S(-length));
}

/// Sequence form: aligned per-step target/prediction lists.
template <typename S>
Var<S> cdp_loss(const std::vector<Var<S>>& u_targets, const std::vector<Var<S>>& u_hats) {
  if (u_targets.size() != u_hats.size())
    throw ConfigError("cdp_loss: target/prediction sequence length mismatch");
  Var<S> u_all = concat_cols(u_targets);
  Var<S> hat_all = concat_cols(u_hats);
  return cdp_loss_cols(u_all, hat_all, int(u_targets.size()));
}

/// KL between two unimix categorical codes, summed over groups, per column.
template <typename S>
Var<S> kl_cols(Var<S> p_probs, Var<S> p_logits, Var<S> q_logits) {
  return colwise_sum(cmul(p_probs, sub(p_logits, q_logits)));
}

template <typename S>
struct KlPair {
  Var<S> dyn;  // max(1, KL[SG(post) || prior]), trains the prior
  Var<S> rep;  // max(1, KL[post || SG(prior)]), trains the posterior
  Var<S> raw;  // unclipped KL[post || prior] (diagnostic, batch mean)
};

/// Balanced KL with a free-bits floor, applied to the batch-mean KL of a
/// single time step.
template <typename S>
KlPair<S> kl_balanced(const CodeVars<S>& post, const CodeVars<S>& prior) {
  Var<S> dyn_kl = kl_cols(stop_grad(post.probs), stop_grad(post.logits), prior.logits);
  Var<S> rep_kl = kl_cols(post.probs, post.logits, stop_grad(prior.logits));
  Var<S> raw = mean_all(dyn_kl);
  if (!raw.value().allFinite()) throw NumericalError("non-finite KL divergence");
  return KlPair<S>{clamp_min(mean_all(dyn_kl), S(1)), clamp_min(mean_all(rep_kl), S(1)), raw};
}

template <typename S>
struct KlSeq {
  Var<S> dyn;  // sum_t max(1, mean_b KL_dyn_t)
  Var<S> rep;
  S raw_mean = 0;  // time+batch mean of the unclipped KL
};

/// Free bits per time step over a time-major column layout.
template <typename S>
KlSeq<S> kl_balanced_cols(const CodeVars<S>& post_all, const CodeVars<S>& prior_all, int batch,
                          int length) {
  Var<S> dyn_kl = kl_cols(stop_grad(post_all.probs), stop_grad(post_all.logits), prior_all.logits);
  Var<S> rep_kl = kl_cols(post_all.probs, post_all.logits, stop_grad(prior_all.logits));
  if (!dyn_kl.value().allFinite()) throw NumericalError("non-finite KL divergence");
  std::vector<Var<S>> dyn_steps, rep_steps;
  for (int t = 0; t < length; ++t) {
    dyn_steps.push_back(clamp_min(mean_all(cols(dyn_kl, Index(t) * batch, batch)), S(1)));
    rep_steps.push_back(clamp_min(mean_all(cols(rep_kl, Index(t) * batch, batch)), S(1)));
  }
  KlSeq<S> out;
  out.dyn = sum_all(concat_cols(dyn_steps));
  out.rep = sum_all(concat_cols(rep_steps));
  out.raw_mean = dyn_kl.value().mean();
  return out;
}

/// Gaussian negative log-likelihood (unit variance) of symlog-transformed
/// rewards, per column.
template <typename S>
Var<S> reward_nll_cols(Var<S> mean_symlog, const Mat<S>& rewards) {
  Mat<S> target(1, rewards.cols());
  for (Index i = 0; i < rewards.cols(); ++i) target(0, i) = symlog(rewards(0, i));
  Var<S> d = sub(mean_symlog, mean_symlog.tape->constant(target));
  return add_scalar(scale(cmul(d, d), S(0.5)), S(kHalfLogTwoPi));
}

/// Bernoulli negative log-likelihood of continuation flags, per column.
template <typename S>
Var<S> cont_nll_cols(Var<S> cont_prob, const Mat<S>& conts) {
  Tape<S>& t = *cont_prob.tape;
  Var<S> c = t.constant(conts);
  Var<S> one_minus_c = t.constant((1 - conts.array()).matrix());
  Var<S> lp = log_(cont_prob);
  Var<S> lq = log_(add_scalar(neg(cont_prob), S(1)));
  return neg(add(cmul(c, lp), cmul(one_minus_c, lq)));
}

/// L_aux = sum_t mean_b [reward NLL + continuation NLL]. Returns the two
/// parts separately so the breakdown can report them.
template <typename S>
std::pair<Var<S>, Var<S>> aux_loss_cols(Var<S> reward_mean, Var<S> cont_prob,
                                        const Mat<S>& rewards, const Mat<S>& conts, int length) {
  Var<S> r = scale(mean_all(reward_nll_cols(reward_mean, rewards)), S(length));
  Var<S> c = scale(mean_all(cont_nll_cols(cont_prob, conts)), S(length));
  return {r, c};
}

/// L_recon = sum_t mean_b sum_pixels Gaussian NLL (unit variance).
template <typename S>
Var<S> recon_loss_cols(Var<S> decoded_mean, const Mat<S>& pixels, int length) {
  Var<S> d = sub(decoded_mean, decoded_mean.tape->constant(pixels));
  Var<S> per_col = colwise_sum(add_scalar(scale(cmul(d, d), S(0.5)), S(kHalfLogTwoPi)));
  return scale(mean_all(per_col), S(length));
}

/// Cross-entropy of the inverse action model, sum_t mean_b.
template <typename S>
Var<S> action_loss_cols(Var<S> logits, const Mat<S>& action_onehot, int groups_len, int classes) {
  Var<S> lsm = log_softmax_groups(logits, 1, classes);
  Var<S> ce = neg(colwise_sum(cmul(lsm, logits.tape->constant(action_onehot))));
  return scale(mean_all(ce), S(groups_len));
}

template <typename S>
struct TotalLoss {
  Var<S> total;
  LossBreakdown<S> breakdown;
};

/// Weighted composite objective. Per-term breakdown fields are time means, so
/// breakdown.total == sum_i w_i * term_i holds exactly by construction.
template <typename S>
TotalLoss<S> total_loss(Tape<S>& tape, const LossWeights<S>& w, Var<S> cdp_sum, Var<S> aux_reward_sum,
                        Var<S> aux_cont_sum, Var<S> dyn_sum, Var<S> rep_sum, Var<S> recon_sum,
                        Var<S> action_sum, int length, double raw_kl, double cos_mean, double u_var,
                        double uhat_var) {
  const S inv_len = S(1) / S(length);
  TotalLoss<S> out;
  Var<S> total = tape.constant_scalar(S(0));
  auto add_term = [&](Var<S> term_sum, S weight, S& slot) {
    if (!term_sum.valid()) return;
    Var<S> term = scale(term_sum, inv_len);
    slot = term.scalar();
    if (weight != S(0)) total = add(total, scale(term, weight));
  };
  add_term(cdp_sum, w.cdp, out.breakdown.cdp);
  add_term(aux_reward_sum, w.aux, out.breakdown.aux_reward);
  add_term(aux_cont_sum, w.aux, out.breakdown.aux_cont);
  add_term(dyn_sum, w.dyn, out.breakdown.dyn);
  add_term(rep_sum, w.rep, out.breakdown.rep);
  add_term(recon_sum, w.recon, out.breakdown.recon);
  add_term(action_sum, w.action, out.breakdown.action);
  out.total = total;
  out.breakdown.total = total.scalar();
  out.breakdown.raw_kl = S(raw_kl);
  out.breakdown.cos_mean = S(cos_mean);
  out.breakdown.u_var = S(u_var);
  out.breakdown.collapse_warning = uhat_var < 1e-6 && out.breakdown.cdp < S(-0.99);

  std::ostringstream bad;
  auto check = [&](const char* name, S v) {
    if (!std::isfinite(double(v))) bad << " " << name << "=" << double(v);
  };
  check("cdp", out.breakdown.cdp);
  check("aux_reward", out.breakdown.aux_reward);
  check("aux_cont", out.breakdown.aux_cont);
  check("dyn", out.breakdown.dyn);
  check("rep", out.breakdown.rep);
  check("recon", out.breakdown.recon);
  check("action", out.breakdown.action);
  check("total", out.breakdown.total);
  if (!bad.str().empty())
    throw NumericalError("non-finite loss term(s):" + bad.str());
  return out;
}

/// Mean per-feature variance across columns (collapse diagnostic).
template <typename S>
S batch_variance(const Mat<S>& m) {
  if (m.cols() < 2) return S(0);
  S acc = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    S mu = m.row(r).mean();
    acc += (m.row(r).array() - mu).square().sum() / S(m.cols());
  }
  return acc / S(m.rows());
}

}  // namespace dcdp
