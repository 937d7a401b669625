#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "opcomp/error.hpp"

namespace opcomp {

struct LanczosOptions {
  int max_iterations = 400;
  /// Converged once the Ritz residual of the wanted eigenvalue is below
  /// tolerance * |eigenvalue|.
  double tolerance = 1e-11;
  int check_every = 4;
  std::uint64_t seed = 0x5eed;
};

template <typename Scalar>
struct ExtremeEigenvalues {
  Scalar largest = 0;            // algebraically largest Ritz value
  Scalar smallest = 0;           // algebraically smallest Ritz value
  Scalar largest_magnitude = 0;  // max(|largest|, |smallest|)
  Scalar residual = 0;           // Ritz residual bound for largest_magnitude
  int iterations = 0;
  bool converged = false;
};

/// Lanczos with full reorthogonalization for the extreme eigenvalues of an
/// operator that is self-adjoint in the inner product `dot`.
///
/// `apply(x, y)` writes y = T x. With a non-Euclidean `dot` (e.g. a mass
/// matrix product), T must be self-adjoint with respect to that product.
template <typename Scalar, typename Apply, typename Dot>
ExtremeEigenvalues<Scalar> lanczos_extreme(Eigen::Index n, Apply&& apply, Dot&& dot,
                                           const LanczosOptions& options = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require(n > 0, "lanczos needs a nonempty space");

  const int max_steps = static_cast<int>(std::min<Eigen::Index>(options.max_iterations, n));
  Matrix basis(n, max_steps + 1);
  std::vector<Scalar> alpha, beta;

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = Scalar(1) + Scalar(0.5 * unit(rng));
  Scalar norm = std::sqrt(dot(v, v));
  require(norm > 0, "lanczos start vector vanished", ErrorKind::NumericalFailure);
  basis.col(0) = v / norm;

  ExtremeEigenvalues<Scalar> out;
  Vector w(n);
  auto ritz = [&](int k, bool final_step) {
    Vector diag = Eigen::Map<const Vector>(alpha.data(), k);
    Vector sub = k > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), k - 1)) : Vector(0);
    Eigen::SelfAdjointEigenSolver<Matrix> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const auto& values = tri.eigenvalues();
    out.smallest = values(0);
    out.largest = values(k - 1);
    const bool top = std::abs(out.largest) >= std::abs(out.smallest);
    const Eigen::Index idx = top ? k - 1 : 0;
    out.largest_magnitude = std::abs(values(idx));
    const Scalar tail = final_step ? Scalar(0) : beta.back();
    out.residual = std::abs(tail * tri.eigenvectors()(k - 1, idx));
    out.iterations = k;
    out.converged = out.residual <= Scalar(options.tolerance) * out.largest_magnitude ||
                    out.largest_magnitude == Scalar(0);
  };

  for (int k = 0; k < max_steps; ++k) {
    apply(basis.col(k), w);
    const Scalar a = dot(basis.col(k), w);
    alpha.push_back(a);
    // full reorthogonalization, applied twice for stability
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j <= k; ++j) w -= dot(basis.col(j), w) * basis.col(j);
    const Scalar b = std::sqrt(std::max(Scalar(0), dot(w, w)));
    beta.push_back(b);
    const bool exhausted = b <= Scalar(1e-14) * std::max(std::abs(a), Scalar(1e-300)) ||
                           k + 1 == n;
    if (exhausted) {
      ritz(k + 1, true);
      return out;
    }
    basis.col(k + 1) = w / b;
    if ((k + 1) % options.check_every == 0 || k + 1 == max_steps) {
      ritz(k + 1, false);
      if (out.converged) return out;
    }
  }
  return out;
}

template <typename Scalar, typename Apply>
ExtremeEigenvalues<Scalar> lanczos_extreme(Eigen::Index n, Apply&& apply,
                                           const LanczosOptions& options = {}) {
  auto euclid = [](const auto& x, const auto& y) -> Scalar { return x.dot(y); };
  return lanczos_extreme<Scalar>(n, std::forward<Apply>(apply), euclid, options);
}

}  // namespace opcomp
