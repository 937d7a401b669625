#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <utility>

#include "opcomp/mesh.hpp"

namespace opcomp {

/// SplitMix64: small, portable and splittable; draws are identical on every
/// platform for a given seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Independent stream derived from this one.
  SplitMix64 split() { return SplitMix64(next()); }

 private:
  std::uint64_t state_;
};

enum class FieldKind { Constant, Flexural1d, Plate2d };

/// Rough coefficient fields for the fourth-order examples.
///
/// Flexural1d:  a(x) = 1 + 1/2 sin( sum_k k^-alpha (z1_k sin(kx) + z2_k cos(kx)) )
/// Plate2d:     a20 = a02 = fixed multiscale quotient field, and
///              a11(x,y) = 1 + 1/2 sin( sum_k k^-alpha (z1_k sin(kx) + z2_k cos(ky)) )
class CoefficientField {
 public:
  static CoefficientField constant(double value = 1.0);
  static CoefficientField flexural(Eigen::VectorXd zeta1, Eigen::VectorXd zeta2, double alpha = 0.0,
                                   std::uint64_t seed = 0);
  static CoefficientField plate(Eigen::VectorXd zeta1, Eigen::VectorXd zeta2, double alpha = 0.0,
                                std::uint64_t seed = 0);

  FieldKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  Index modes() const { return zeta1_.size(); }
  double alpha() const { return alpha_; }
  const Eigen::VectorXd& zeta1() const { return zeta1_; }
  const Eigen::VectorXd& zeta2() const { return zeta2_; }

  /// Scalar coefficient a(x) (Constant, Flexural1d).
  double scalar(double x) const;
  /// (a20, a02, a11) at (x, y). A Constant field returns (c, c, c).
  Eigen::Vector3d plate_terms(const Point& x) const;

 private:
  CoefficientField() = default;
  double oscillatory(double x, double y) const;

  FieldKind kind_ = FieldKind::Constant;
  double value_ = 1.0;
  double alpha_ = 0.0;
  std::uint64_t seed_ = 0;
  Eigen::VectorXd zeta1_, zeta2_;
};

/// zeta entries uniform on [-1/2, 1/2], drawn zeta1_1..K then zeta2_1..K.
CoefficientField sample_flexural_coefficient(std::uint64_t seed, Index modes = 40, double alpha = 0.0);
CoefficientField sample_plate_coefficients(std::uint64_t seed, Index modes = 20, double alpha = 0.0);

/// Plate multiscale term a20 = a02 (independent of the random modes).
double plate_a20(double x, double y);

/// Min/max over a uniform grid of the extreme eigenvalues of the highest-order
/// coefficient block: diag(a20, a02, 2 a11) for plates, a(x) otherwise.
std::pair<double, double> check_strong_ellipticity(const CoefficientField& field, Index resolution);

/// CSV grid: "x,value" (1D) or "x,y,a20,a02,a11" (plate), `resolution` points per axis.
void write_field_csv(std::ostream& out, const CoefficientField& field, Index resolution);

}  // namespace opcomp
