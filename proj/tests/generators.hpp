#pragma once

// Small hand-rolled generators for property tests.

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace gen {

class Source {
 public:
  explicit Source(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
  Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(-scale, scale);
    return v;
  }
  /// Nonzero vector with a random support pattern.
  Eigen::VectorXd sparse_nonzero(Eigen::Index n) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    const long hits = integer(1, static_cast<long>(n));
    for (long k = 0; k < hits; ++k) v(integer(0, static_cast<long>(n) - 1)) = uniform(-1, 1);
    if (v.isZero()) v(0) = 1.0;
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace gen
