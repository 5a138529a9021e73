#pragma once

#include <sstream>
#include <vector>

#include "dcdp/nn.hpp"

namespace dcdp {

struct ModelConfig {
  int image_size = 32;
  int image_channels = 3;
  int conv_depth = 8;    // base channel count, doubled per conv layer
  int feature_dim = 512;  // D_u, the continuous deterministic embedding
  int deter_dim = 256;    // D_h, recurrent state width
  int groups = 8;         // stochastic code: groups x classes one-hots
  int classes = 8;
  int hidden_dim = 256;  // MLP hidden width
  int cdp_hidden = 256;  // hidden width of the CDP predictor
  int num_actions = 6;
  double unimix = 0.01;     // uniform mixture on categorical probabilities
  bool decoder_head = false;  // reconstruction head (Dreamer baseline variant)
  bool action_head = false;   // inverse action prediction head (MuDreamer variant)

  int z_dim() const { return groups * classes; }
  Index obs_dim() const { return Index(image_channels) * image_size * image_size; }
  Index latent_dim() const { return Index(deter_dim) + z_dim(); }
};

/// A factored categorical code: logits are log of the unimix-smoothed
/// probabilities; sample is a straight-through one-hot (or the mode).
template <typename S>
struct CodeVars {
  Var<S> logits;
  Var<S> probs;
  Var<S> sample;  // invalid when sampling was not requested
};

/// Batch of subsequences laid out time-major: column t*batch + b.
template <typename S>
struct SequenceBatch {
  Mat<S> obs;           // obs_dim x (B*L), pixels already scaled to [-0.5, 0.5]
  Mat<S> prev_actions;  // num_actions x (B*L), one-hot (zeros at episode start)
  Mat<S> rewards;       // 1 x (B*L)
  Mat<S> conts;         // 1 x (B*L)
  int batch = 0;
  int length = 0;
};

template <typename S>
struct Unroll {
  Var<S> u_all;    // embeddings of every observation (CDP targets)
  Var<S> h_all;    // deterministic states, time-major columns
  Var<S> z_all;    // straight-through posterior samples
  std::vector<Var<S>> h_steps;
  std::vector<CodeVars<S>> post_steps;
  CodeVars<S> post_all;   // per-column logits/probs (no sample)
  CodeVars<S> prior_all;  // dynamics predictor distribution per column
  Var<S> cdp_all;         // predictor outputs, aligned with u_all
  Var<S> reward_mean_all;  // symlog-space reward means, 1 x (B*L)
  Var<S> cont_prob_all;    // continuation probabilities in (0,1)
  Var<S> recon_all;        // decoded pixel means (valid when requested)
  Var<S> action_logits_all;  // inverse-model logits over first L-1 steps
  int batch = 0;
  int length = 0;
};

template <typename S>
class WorldModel {
 public:
  WorldModel(const ModelConfig& cfg, ParamRegistry<S>& reg, Rng& rng)
      : cfg_(cfg),
        encoder_(reg, "worldmodel/encoder", cfg.image_size, cfg.image_channels, cfg.conv_depth,
                 cfg.feature_dim, rng),
        seq_(reg, "worldmodel/seq", cfg.z_dim(), cfg.num_actions, cfg.hidden_dim, cfg.deter_dim,
             rng),
        post_h_(reg, "worldmodel/posterior/in_h", cfg.deter_dim, cfg.hidden_dim, rng,
                Init::XavierNormal, false),
        post_u_(reg, "worldmodel/posterior/in_u", cfg.feature_dim, cfg.hidden_dim, rng,
                Init::XavierNormal, false),
        post_norm_(reg, "worldmodel/posterior/norm", cfg.hidden_dim),
        post_out_(reg, "worldmodel/posterior/out", cfg.hidden_dim, cfg.z_dim(), rng,
                  Init::XavierUniform, true),
        prior_(reg, "worldmodel/prior", cfg.deter_dim, cfg.hidden_dim, 1, cfg.z_dim(), rng),
        cdp_(reg, "worldmodel/cdp", cfg.deter_dim, cfg.cdp_hidden, 1, cfg.feature_dim, rng),
        reward_(reg, "worldmodel/reward", cfg.latent_dim(), cfg.hidden_dim, 1, 1, rng,
                Init::Zeros),
        cont_(reg, "worldmodel/cont", cfg.latent_dim(), cfg.hidden_dim, 1, 1, rng) {
    if (cfg.decoder_head)
      decoder_ = ConvDecoder<S>(reg, "worldmodel/decoder", cfg.latent_dim(), cfg.image_size,
                                cfg.image_channels, cfg.conv_depth, rng);
    if (cfg.action_head)
      action_ = Mlp<S>(reg, "worldmodel/action", cfg.latent_dim() + cfg.feature_dim,
                       cfg.hidden_dim, 1, cfg.num_actions, rng);
  }

  const ModelConfig& config() const { return cfg_; }

  /// Deterministic embedding u of a batch of scaled observations.
  Var<S> extract_features(Tape<S>& t, const Mat<S>& pixels) const {
    if (pixels.rows() != cfg_.obs_dim()) {
      std::ostringstream msg;
      msg << "observation shape mismatch: got " << pixels.rows() << " values per column, expected "
          << cfg_.obs_dim();
      throw ConfigError(msg.str());
    }
    return encoder_(t.constant(pixels));
  }

  Var<S> extract_features(Tape<S>& t, Var<S> pixels) const {
    if (pixels.rows() != cfg_.obs_dim()) throw ConfigError("observation shape mismatch");
    return encoder_(pixels);
  }

  Var<S> initial_deter(Tape<S>& t, int batch) const { return t.zeros(cfg_.deter_dim, batch); }
  Var<S> initial_code(Tape<S>& t, int batch) const { return t.zeros(cfg_.z_dim(), batch); }

  /// One recurrence step h' = f(h, z, a).
  Var<S> sequence_step(Tape<S>& t, Var<S> h, Var<S> z, Var<S> a) const {
    (void)t;
    return seq_.step(h, z, a);
  }

  /// Posterior code q(z | h, u).
  CodeVars<S> encode_posterior(Tape<S>& t, Var<S> h, Var<S> u, Rng* rng, bool mode = false) const {
    Var<S> hidden = silu(post_norm_(add(post_h_(h), post_u_(u))));
    return make_code(t, post_out_(hidden), rng, mode);
  }

  /// Prior code p(z | h) from the dynamics predictor.
  CodeVars<S> predict_prior(Tape<S>& t, Var<S> h, Rng* rng, bool mode = false) const {
    return make_code(t, prior_(h), rng, mode);
  }

  /// CDP predictor u_hat = g(h).
  Var<S> predict_cdp(Tape<S>& t, Var<S> h) const {
    (void)t;
    return cdp_(h);
  }

  Var<S> reward_symlog_mean(Tape<S>& t, Var<S> latent) const {
    (void)t;
    return reward_(latent);
  }

  /// Continuation probability, clamped away from {0,1}.
  Var<S> cont_prob(Tape<S>& t, Var<S> latent) const {
    (void)t;
    return clamp(sigmoid(cont_(latent)), S(1e-6), S(1) - S(1e-6));
  }

  Var<S> decode(Tape<S>& t, Var<S> latent) const {
    (void)t;
    if (!cfg_.decoder_head) throw ConfigError("decoder head not enabled");
    return decoder_(latent);
  }

  Var<S> action_logits(Tape<S>& t, Var<S> latent, Var<S> u_next) const {
    if (!cfg_.action_head) throw ConfigError("action head not enabled");
    return action_(concat_rows<S>({latent, u_next}));
  }

  /// Posterior unroll over a time-major sequence batch. When
  /// detach_head_inputs is set the reward/continuation heads see
  /// stop-gradded latents (the no-reward-gradient ablation).
  Unroll<S> observe(Tape<S>& t, const SequenceBatch<S>& seq, Rng& rng,
                    bool detach_head_inputs = false, bool want_decoder = false,
                    bool want_action = false) const {
    const int B = seq.batch, L = seq.length;
    Unroll<S> out;
    out.batch = B;
    out.length = L;
    out.u_all = extract_features(t, seq.obs);
    Var<S> u_proj = post_u_(out.u_all);  // hoisted out of the recurrence

    Var<S> h = initial_deter(t, B);
    Var<S> z = initial_code(t, B);
    std::vector<Var<S>> h_list, z_list, logits_list, probs_list;
    for (int step = 0; step < L; ++step) {
      Var<S> a = t.constant(seq.prev_actions.middleCols(Index(step) * B, B));
      h = seq_.step(h, z, a);
      Var<S> hidden = silu(post_norm_(add(post_h_(h), cols(u_proj, Index(step) * B, B))));
      CodeVars<S> post = make_code(t, post_out_(hidden), &rng, false);
      z = post.sample;
      h_list.push_back(h);
      z_list.push_back(z);
      logits_list.push_back(post.logits);
      probs_list.push_back(post.probs);
      out.h_steps.push_back(h);
      out.post_steps.push_back(post);
    }
    out.h_all = concat_cols(h_list);
    out.z_all = concat_cols(z_list);
    out.post_all = CodeVars<S>{concat_cols(logits_list), concat_cols(probs_list), Var<S>{}};
    out.prior_all = make_code(t, prior_(out.h_all), nullptr, false);
    out.cdp_all = cdp_(out.h_all);

    Var<S> latent = concat_rows<S>({out.h_all, out.z_all});
    Var<S> head_in = detach_head_inputs ? stop_grad(latent) : latent;
    out.reward_mean_all = reward_(head_in);
    out.cont_prob_all = clamp(sigmoid(cont_(head_in)), S(1e-6), S(1) - S(1e-6));
    if (want_decoder) out.recon_all = decode(t, latent);
    if (want_action && L > 1) {
      Var<S> latent_head = cols(latent, 0, Index(L - 1) * B);
      Var<S> u_next = cols(out.u_all, B, Index(L - 1) * B);
      out.action_logits_all = action_logits(t, latent_head, u_next);
    }
    return out;
  }

  /// Scale raw 8-bit pixel intensities into the model's input range.
  static Mat<S> scale_pixels(const std::vector<std::uint8_t>& raw, Index rows, Index cols) {
    Mat<S> m(rows, cols);
    for (Index i = 0; i < rows * cols; ++i) m.data()[i] = S(raw[std::size_t(i)]) / S(255) - S(0.5);
    return m;
  }

  CodeVars<S> make_code(Tape<S>& t, Var<S> raw_logits, Rng* rng, bool mode) const {
    if (!raw_logits.value().allFinite()) {
      std::ostringstream msg;
      msg << "non-finite categorical logits: min=" << raw_logits.value().minCoeff()
          << " max=" << raw_logits.value().maxCoeff();
      throw NumericalError(msg.str());
    }
    CodeVars<S> code;
    Var<S> soft = softmax_groups(raw_logits, cfg_.groups, cfg_.classes);
    code.probs = add_scalar(scale(soft, S(1) - S(cfg_.unimix)), S(cfg_.unimix / cfg_.classes));
    code.logits = log_(code.probs);
    if (rng != nullptr || mode) {
      const Mat<S>& p = code.probs.value();
      Mat<S> hard = Mat<S>::Zero(p.rows(), p.cols());
      for (Index b = 0; b < p.cols(); ++b) {
        for (int g = 0; g < cfg_.groups; ++g) {
          auto seg = p.col(b).segment(Index(g) * cfg_.classes, cfg_.classes);
          Index pick = 0;
          if (mode) {
            seg.maxCoeff(&pick);
          } else {
            pick = rng->categorical(seg);
          }
          hard(Index(g) * cfg_.classes + pick, b) = S(1);
        }
      }
      code.sample = add(code.probs, stop_grad(sub(t.constant(hard), code.probs)));
    }
    return code;
  }

 private:
  ModelConfig cfg_;
  ConvEncoder<S> encoder_;
  GruCell<S> seq_;
  Linear<S> post_h_, post_u_;
  LayerNorm<S> post_norm_;
  Linear<S> post_out_;
  Mlp<S> prior_;
  Mlp<S> cdp_;
  Mlp<S> reward_;
  Mlp<S> cont_;
  ConvDecoder<S> decoder_;
  Mlp<S> action_;
};

}  // namespace dcdp
