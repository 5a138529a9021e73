#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcdp {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Bad config file, flag combination, or shape mismatch detected before compute.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered where the model contract requires finiteness.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Environment or subprocess protocol misuse (e.g. step after terminal).
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Counter-based deterministic RNG (splitmix64). Identical seeds give identical
/// streams on every platform, which the determinism tests rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Index sampled from an unnormalized nonnegative weight vector.
  template <typename Derived>
  int categorical(const Eigen::MatrixBase<Derived>& weights) {
    double total = 0;
    for (Index i = 0; i < weights.size(); ++i) total += double(weights(i));
    double r = uniform() * total;
    double acc = 0;
    for (Index i = 0; i < weights.size(); ++i) {
      acc += double(weights(i));
      if (r < acc) return int(i);
    }
    return int(weights.size() - 1);
  }

  /// Derive an independent stream.
  Rng split(std::uint64_t stream) {
    return Rng(next_u64() ^ (0xd1b54a32d192ed03ull * (stream + 1)));
  }

 private:
  std::uint64_t state_;
};

template <typename S>
S symlog(S x) {
  return x >= S(0) ? std::log1p(double(x)) : -std::log1p(double(-x));
}

template <typename S>
S symexp(S x) {
  return x >= S(0) ? S(std::expm1(double(x))) : S(-std::expm1(double(-x)));
}

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

}  // namespace dcdp
