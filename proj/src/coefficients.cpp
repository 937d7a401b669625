#include "opcomp/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "opcomp/error.hpp"

namespace opcomp {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

CoefficientField CoefficientField::constant(double value) {
  require(value > 0, "constant coefficient must be positive");
  CoefficientField f;
  f.kind_ = FieldKind::Constant;
  f.value_ = value;
  return f;
}

CoefficientField CoefficientField::flexural(Eigen::VectorXd zeta1, Eigen::VectorXd zeta2,
                                            double alpha, std::uint64_t seed) {
  require(zeta1.size() == zeta2.size() && zeta1.size() >= 1, "mode vectors must match and be nonempty");
  CoefficientField f;
  f.kind_ = FieldKind::Flexural1d;
  f.zeta1_ = std::move(zeta1);
  f.zeta2_ = std::move(zeta2);
  f.alpha_ = alpha;
  f.seed_ = seed;
  return f;
}

CoefficientField CoefficientField::plate(Eigen::VectorXd zeta1, Eigen::VectorXd zeta2, double alpha,
                                         std::uint64_t seed) {
  CoefficientField f = flexural(std::move(zeta1), std::move(zeta2), alpha, seed);
  f.kind_ = FieldKind::Plate2d;
  return f;
}

double CoefficientField::oscillatory(double x, double y) const {
  double arg = 0;
  for (Index k = 1; k <= modes(); ++k) {
    const double kk = static_cast<double>(k);
    arg += std::pow(kk, -alpha_) * (zeta1_(k - 1) * std::sin(kk * x) + zeta2_(k - 1) * std::cos(kk * y));
  }
  return 1.0 + 0.5 * std::sin(arg);
}

double CoefficientField::scalar(double x) const {
  switch (kind_) {
    case FieldKind::Constant: return value_;
    case FieldKind::Flexural1d: return oscillatory(x, x);
    case FieldKind::Plate2d: break;
  }
  throw Error(ErrorKind::InvalidArgument, "plate fields have no scalar coefficient");
}

double plate_a20(double x, double y) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr double e1 = 1.0 / 5, e2 = 1.0 / 13, e3 = 1.0 / 17, e4 = 1.0 / 31;
  const double t1 = (1.1 + std::sin(two_pi * x / e1)) / (1.1 + std::sin(two_pi * y / e1));
  const double t2 = (1.1 + std::sin(two_pi * y / e2)) / (1.1 + std::cos(two_pi * x / e2));
  const double t3 = (1.1 + std::cos(two_pi * x / e3)) / (1.1 + std::sin(two_pi * y / e3));
  const double t4 = (1.1 + std::sin(two_pi * y / e4)) / (1.1 + std::cos(two_pi * x / e4));
  return (t1 + t2 + t3 + t4 + std::sin(4.0 * x * x * y * y) + 1.0) / 6.0;
}

Eigen::Vector3d CoefficientField::plate_terms(const Point& x) const {
  switch (kind_) {
    case FieldKind::Constant: return Eigen::Vector3d::Constant(value_);
    case FieldKind::Plate2d: {
      const double a20 = plate_a20(x.x(), x.y());
      return {a20, a20, oscillatory(x.x(), x.y())};
    }
    case FieldKind::Flexural1d: break;
  }
  throw Error(ErrorKind::InvalidArgument, "1D flexural fields have no plate terms");
}

namespace {

CoefficientField sample_modes(std::uint64_t seed, Index modes, double alpha, bool plate) {
  require(modes >= 1, "mode count must be positive");
  SplitMix64 rng(seed);
  Eigen::VectorXd z1(modes), z2(modes);
  for (Index k = 0; k < modes; ++k) z1(k) = rng.uniform() - 0.5;
  for (Index k = 0; k < modes; ++k) z2(k) = rng.uniform() - 0.5;
  return plate ? CoefficientField::plate(std::move(z1), std::move(z2), alpha, seed)
               : CoefficientField::flexural(std::move(z1), std::move(z2), alpha, seed);
}

}  // namespace

CoefficientField sample_flexural_coefficient(std::uint64_t seed, Index modes, double alpha) {
  return sample_modes(seed, modes, alpha, false);
}

CoefficientField sample_plate_coefficients(std::uint64_t seed, Index modes, double alpha) {
  return sample_modes(seed, modes, alpha, true);
}

std::pair<double, double> check_strong_ellipticity(const CoefficientField& field, Index resolution) {
  require(resolution >= 2, "ellipticity grid needs at least 2 points per axis");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const double step = 1.0 / static_cast<double>(resolution - 1);
  if (field.kind() == FieldKind::Plate2d) {
    for (Index j = 0; j < resolution; ++j)
      for (Index i = 0; i < resolution; ++i) {
        const Eigen::Vector3d t = field.plate_terms(Point(i * step, j * step));
        const Eigen::Vector3d diag(t(0), t(1), 2.0 * t(2));
        lo = std::min(lo, diag.minCoeff());
        hi = std::max(hi, diag.maxCoeff());
      }
  } else {
    for (Index i = 0; i < resolution; ++i) {
      const double a = field.scalar(i * step);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  }
  return {lo, hi};
}

void write_field_csv(std::ostream& out, const CoefficientField& field, Index resolution) {
  require(resolution >= 2, "field grid needs at least 2 points per axis");
  const double step = 1.0 / static_cast<double>(resolution - 1);
  out.precision(17);
  if (field.kind() == FieldKind::Plate2d) {
    out << "x,y,a20,a02,a11\n";
    for (Index j = 0; j < resolution; ++j)
      for (Index i = 0; i < resolution; ++i) {
        const Point x(i * step, j * step);
        const Eigen::Vector3d t = field.plate_terms(x);
        out << x.x() << ',' << x.y() << ',' << t(0) << ',' << t(1) << ',' << t(2) << '\n';
      }
  } else {
    out << "x,value\n";
    for (Index i = 0; i < resolution; ++i) out << i * step << ',' << field.scalar(i * step) << '\n';
  }
}

}  // namespace opcomp
