#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dcdp/world_model.hpp"

namespace dcdp {

/// One stored step: the observation, the action that led to it (-1 at episode
/// start), the reward received on arrival and the continuation flag.
struct ReplayTransition {
  std::vector<std::uint8_t> obs;
  int prev_action = -1;
  float reward = 0;
  std::uint8_t cont = 1;
};

/// Ring buffer of transitions. Sampled subsequences never cross episode
/// boundaries (and therefore never span an eviction boundary either: evicted
/// slots belong to a different episode id).
template <typename S>
class ReplayBuffer {
 public:
  ReplayBuffer(Index capacity, Index obs_bytes, int num_actions)
      : capacity_(capacity), obs_bytes_(obs_bytes), num_actions_(num_actions) {
    obs_.resize(std::size_t(capacity) * std::size_t(obs_bytes));
    prev_action_.resize(std::size_t(capacity));
    reward_.resize(std::size_t(capacity));
    cont_.resize(std::size_t(capacity));
    episode_.assign(std::size_t(capacity), -1);
    step_.resize(std::size_t(capacity));
  }

  Index size() const { return filled_; }
  Index capacity() const { return capacity_; }

  void add_episode(const std::vector<ReplayTransition>& episode, bool truncated = false) {
    if (episode.empty()) throw ConfigError("add_episode: empty episode");
    if (!truncated && episode.back().cont != 0)
      throw ConfigError("add_episode: episode does not end with continuation 0 (pass truncated)");
    for (const auto& tr : episode) {
      if (Index(tr.obs.size()) != obs_bytes_)
        throw ConfigError("add_episode: observation byte size mismatch");
      if (tr.cont > 1) throw ConfigError("add_episode: continuation flag must be 0 or 1");
      if (tr.prev_action < -1 || tr.prev_action >= num_actions_)
        throw ConfigError("add_episode: action index out of range");
    }
    for (std::size_t i = 0; i < episode.size(); ++i) {
      const auto& tr = episode[i];
      std::size_t slot = std::size_t(write_);
      std::copy(tr.obs.begin(), tr.obs.end(), obs_.begin() + slot * std::size_t(obs_bytes_));
      prev_action_[slot] = std::int16_t(tr.prev_action);
      reward_[slot] = tr.reward;
      cont_[slot] = tr.cont;
      episode_[slot] = episode_counter_;
      step_[slot] = std::int32_t(i);
      write_ = (write_ + 1) % capacity_;
      filled_ = std::min(filled_ + 1, capacity_);
    }
    ++episode_counter_;
  }

  bool valid_start(Index slot, int length) const {
    std::int64_t ep = episode_[std::size_t(slot)];
    if (ep < 0) return false;
    std::int32_t s0 = step_[std::size_t(slot)];
    for (int i = 1; i < length; ++i) {
      Index j = (slot + i) % capacity_;
      if (episode_[std::size_t(j)] != ep || step_[std::size_t(j)] != s0 + i) return false;
    }
    return true;
  }

  /// Uniform sample over valid window starts (rejection with a scan
  /// fallback). Returns the ring slot of the window start.
  std::optional<Index> sample_start(int length, Rng& rng) const {
    if (filled_ < length) return std::nullopt;
    for (int attempt = 0; attempt < 128; ++attempt) {
      Index slot = Index(rng.below(std::uint64_t(filled_)));
      if (valid_start(slot, length)) return slot;
    }
    // Degenerate buffer (almost no valid windows): scan from a random offset.
    Index offset = Index(rng.below(std::uint64_t(filled_)));
    for (Index i = 0; i < filled_; ++i) {
      Index slot = (offset + i) % filled_;
      if (valid_start(slot, length)) return slot;
    }
    return std::nullopt;
  }

  /// Time-major batch of B subsequences of length L, or nullopt while the
  /// buffer is still warming up.
  std::optional<SequenceBatch<S>> sample(int batch, int length, Rng& rng) const {
    std::vector<Index> starts(std::size_t(batch));
    for (int b = 0; b < batch; ++b) {
      auto s = sample_start(length, rng);
      if (!s) return std::nullopt;
      starts[std::size_t(b)] = *s;
    }
    SequenceBatch<S> out;
    out.batch = batch;
    out.length = length;
    out.obs.resize(obs_bytes_, Index(batch) * length);
    out.prev_actions = Mat<S>::Zero(num_actions_, Index(batch) * length);
    out.rewards.resize(1, Index(batch) * length);
    out.conts.resize(1, Index(batch) * length);
    for (int b = 0; b < batch; ++b) {
      for (int step = 0; step < length; ++step) {
        std::size_t slot = std::size_t((starts[std::size_t(b)] + step) % capacity_);
        Index col = Index(step) * batch + b;
        const std::uint8_t* px = obs_.data() + slot * std::size_t(obs_bytes_);
        for (Index i = 0; i < obs_bytes_; ++i)
          out.obs(i, col) = S(px[i]) / S(255) - S(0.5);
        if (prev_action_[slot] >= 0) out.prev_actions(prev_action_[slot], col) = S(1);
        out.rewards(0, col) = S(reward_[slot]);
        out.conts(0, col) = S(cont_[slot]);
      }
    }
    return out;
  }

 private:
  Index capacity_;
  Index obs_bytes_;
  int num_actions_;
  Index write_ = 0;
  Index filled_ = 0;
  std::int64_t episode_counter_ = 0;

  std::vector<std::uint8_t> obs_;
  std::vector<std::int16_t> prev_action_;
  std::vector<float> reward_;
  std::vector<std::uint8_t> cont_;
  std::vector<std::int64_t> episode_;
  std::vector<std::int32_t> step_;
};

}  // namespace dcdp
