#pragma once

#include <string>
#include <vector>

#include "dcdp/nn.hpp"

namespace dcdp {

enum class OptimMode { Adam, Sgd };

struct GroupSpec {
  std::string name;
  std::vector<std::string> prefixes;  // parameter-name prefixes owned by this group
  double lr = 1e-4;
};

/// Optimizer over named parameter groups with per-group learning rates, a
/// shared global-norm gradient clip and a startup name audit: every tensor it
/// owns must match exactly one group.
template <typename S>
class MultiOptimizer {
 public:
  MultiOptimizer(ParamRegistry<S>& reg, std::vector<GroupSpec> groups,
                 const std::vector<std::string>& owned_prefixes, OptimMode mode, double clip_norm,
                 double adam_eps = 1e-8)
      : groups_(std::move(groups)), mode_(mode), clip_norm_(clip_norm), adam_eps_(adam_eps) {
    group_tensors_.resize(groups_.size());
    for (const auto& t : reg.tensors()) {
      if (!matches_any(t->name, owned_prefixes)) continue;
      int found = -1;
      for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (matches_any(t->name, groups_[g].prefixes)) {
          if (found >= 0)
            throw ConfigError("parameter " + t->name + " matched by groups " +
                              groups_[std::size_t(found)].name + " and " + groups_[g].name);
          found = int(g);
        }
      }
      if (found < 0)
        throw ConfigError("parameter " + t->name + " not covered by any optimizer group");
      group_tensors_[std::size_t(found)].push_back(t.get());
      if (mode_ == OptimMode::Adam) {
        t->adam_m = Mat<S>::Zero(t->value.rows(), t->value.cols());
        t->adam_v = Mat<S>::Zero(t->value.rows(), t->value.cols());
      }
    }
  }

  const std::vector<GroupSpec>& groups() const { return groups_; }
  const std::vector<Tensor<S>*>& group_tensors(std::size_t g) const { return group_tensors_[g]; }

  std::vector<Tensor<S>*> all_tensors() const {
    std::vector<Tensor<S>*> out;
    for (const auto& g : group_tensors_) out.insert(out.end(), g.begin(), g.end());
    return out;
  }

  /// Global gradient norm over every owned tensor.
  double grad_norm() const {
    double sq = 0;
    for (const auto& g : group_tensors_)
      for (const auto* t : g) sq += double(t->grad.squaredNorm());
    return std::sqrt(sq);
  }

  /// Apply one update from the accumulated gradients, then clear them.
  void step() {
    ++step_count_;
    double clip_scale = 1.0;
    if (clip_norm_ > 0) {
      double norm = grad_norm();
      if (norm > clip_norm_) clip_scale = clip_norm_ / norm;
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const S lr = S(groups_[g].lr);
      for (Tensor<S>* t : group_tensors_[g]) {
        if (mode_ == OptimMode::Sgd) {
          t->value -= lr * S(clip_scale) * t->grad;
        } else {
          const S b1 = S(0.9), b2 = S(0.999);
          Mat<S> grad = t->grad * S(clip_scale);
          t->adam_m = b1 * t->adam_m + (S(1) - b1) * grad;
          t->adam_v =
              (b2 * t->adam_v.array() + (S(1) - b2) * grad.array().square()).matrix();
          S c1 = S(1) - S(std::pow(0.9, double(step_count_)));
          S c2 = S(1) - S(std::pow(0.999, double(step_count_)));
          t->value.array() -= lr * (t->adam_m.array() / c1) /
                              ((t->adam_v.array() / c2).sqrt() + S(adam_eps_));
        }
        t->zero_grad();
      }
    }
  }

  std::int64_t step_count() const { return step_count_; }

  static bool matches_any(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

 private:
  std::vector<GroupSpec> groups_;
  std::vector<std::vector<Tensor<S>*>> group_tensors_;
  OptimMode mode_;
  double clip_norm_;
  double adam_eps_;
  std::int64_t step_count_ = 0;
};

/// Startup audit across optimizers: together they must cover every registered
/// tensor exactly once.
template <typename S>
void audit_partition(const ParamRegistry<S>& reg,
                     const std::vector<const MultiOptimizer<S>*>& optimizers) {
  for (const auto& t : reg.tensors()) {
    int owners = 0;
    for (const auto* opt : optimizers)
      for (std::size_t g = 0; g < opt->groups().size(); ++g)
        for (const auto* owned : opt->group_tensors(g))
          if (owned == t.get()) ++owners;
    if (owners != 1)
      throw ConfigError("parameter " + t->name + " owned by " + std::to_string(owners) +
                        " optimizer groups (expected exactly 1)");
  }
}

}  // namespace dcdp
