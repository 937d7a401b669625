#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>

namespace opcomp {

template <typename Scalar>
struct QuadratureRule {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> points;   // on [0, 1]
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;  // sum to 1
};

/// Gauss-Legendre rule with `n` points mapped to the unit interval.
/// Exact for polynomials of degree 2n-1.
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre(int n) {
  QuadratureRule<Scalar> rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    Scalar x = std::cos(std::numbers::pi_v<Scalar> * (Scalar(i) + Scalar(0.75)) /
                        (Scalar(n) + Scalar(0.5)));
    Scalar dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      Scalar p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1;
      dp = n * (x * p1 - p0) / (x * x - 1);
      const Scalar dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 8 * std::numeric_limits<Scalar>::epsilon()) break;
    }
    const Scalar w = 2 / ((1 - x * x) * dp * dp);
    rule.points(i) = (1 - x) / 2;
    rule.points(n - 1 - i) = (1 + x) / 2;
    rule.weights(i) = w / 2;
    rule.weights(n - 1 - i) = w / 2;
  }
  return rule;
}

/// Points per axis per fine cell used by every assembly in the library.
inline constexpr int kGaussPointsPerAxis = 5;

inline const QuadratureRule<double>& default_rule() {
  static const QuadratureRule<double> rule = gauss_legendre<double>(kGaussPointsPerAxis);
  return rule;
}

}  // namespace opcomp
