#include "opcomp/polyspace.hpp"

#include <cmath>

#include "opcomp/error.hpp"
#include "opcomp/quadrature.hpp"

namespace opcomp {

namespace {

double falling(int n, int k) {
  double r = 1;
  for (int j = 0; j < k; ++j) r *= n - j;
  return r;
}

// d^a/dt^a of t^n
double monomial_derivative(double t, int n, int a) {
  if (a > n) return 0.0;
  return falling(n, a) * std::pow(t, n - a);
}

}  // namespace

Index poly_space_dimension(int k, int dim) {
  // binom(k + d - 1, d)
  return dim == 1 ? k : static_cast<Index>(k * (k + 1) / 2);
}

PolyBasis::PolyBasis(std::shared_ptr<const Partition> partition, int k)
    : partition_(std::move(partition)), k_(k) {
  require(partition_ != nullptr, "poly basis needs a partition");
  require(k >= 1 && k <= 3, "supported half-orders are k = 1, 2, 3");
  const int d = partition_->dim();
  for (int degree = 0; degree < k; ++degree) {
    if (d == 1) {
      exponents_.push_back({degree, 0});
    } else {
      for (int b = 0; b <= degree; ++b) exponents_.push_back({degree - b, b});
    }
  }
  const auto q = static_cast<Index>(exponents_.size());

  // Gram matrix of scaled monomials on the reference cell [-1/2, 1/2]^d.
  const auto& rule = gauss_legendre<double>(kGaussPointsPerAxis);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
  const int ny = d == 2 ? rule.points.size() : 1;
  for (Index a = 0; a < rule.points.size(); ++a) {
    for (int b = 0; b < ny; ++b) {
      const double x = rule.points(a) - 0.5;
      const double y = d == 2 ? rule.points(b) - 0.5 : 0.0;
      const double w = rule.weights(a) * (d == 2 ? rule.weights(b) : 1.0);
      Eigen::VectorXd mono(q);
      for (Index t = 0; t < q; ++t)
        mono(t) = std::pow(x, exponents_[t][0]) * std::pow(y, exponents_[t][1]);
      gram.noalias() += w * mono * mono.transpose();
    }
  }
  // Gram-Schmidt in graded order == inverse Cholesky factor.
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  coefficients_ = llt.matrixL().solve(Eigen::MatrixXd::Identity(q, q));
}

Eigen::VectorXd PolyBasis::evaluate(Index patch, const Point& x, int dx, int dy) const {
  const Patch& p = partition_->patch(patch);
  const double h = partition_->h();
  const double sx = (x.x() - p.centroid.x()) / h;
  const double sy = dim() == 2 ? (x.y() - p.centroid.y()) / h : 0.0;
  const auto q = per_patch();
  Eigen::VectorXd mono(q);
  for (Index t = 0; t < q; ++t) {
    const auto [ex, ey] = exponents_[t];
    mono(t) = monomial_derivative(sx, ex, dx) * monomial_derivative(sy, ey, dy) /
              std::pow(h, dx + dy);
  }
  return coefficients_ * mono;
}

PolyBasis local_poly_basis(std::shared_ptr<const Partition> partition, int k) {
  return PolyBasis(std::move(partition), k);
}

void for_each_patch_quadrature_point(const Partition& partition, Index patch, int subcells,
                                     const std::function<void(const Point&, double)>& visit) {
  const auto& rule = default_rule();
  const Patch& p = partition.patch(patch);
  const double hs = partition.h() / subcells;
  const int d = partition.dim();
  const int sy_count = d == 2 ? subcells : 1;
  const Index qy_count = d == 2 ? rule.points.size() : 1;
  for (int sy = 0; sy < sy_count; ++sy)
    for (int sx = 0; sx < subcells; ++sx)
      for (Index qy = 0; qy < qy_count; ++qy)
        for (Index qx = 0; qx < rule.points.size(); ++qx) {
          Point x(p.lower.x() + (sx + rule.points(qx)) * hs,
                  d == 2 ? p.lower.y() + (sy + rule.points(qy)) * hs : 0.0);
          const double w = rule.weights(qx) * hs * (d == 2 ? rule.weights(qy) * hs : 1.0);
          visit(x, w);
        }
}

Eigen::MatrixXd project_onto_poly(const FunctionJet& u, const PolyBasis& basis, int subcells) {
  const Partition& partition = basis.partition();
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(partition.size(), basis.per_patch());
  for (Index i = 0; i < partition.size(); ++i) {
    for_each_patch_quadrature_point(partition, i, subcells, [&](const Point& x, double w) {
      table.row(i) += (w * u(x, 0, 0)) * basis.evaluate(i, x).transpose();
    });
    table.row(i) /= partition.patch(i).volume;
  }
  return table;
}

double projection_error_squared(const FunctionJet& u, const PolyBasis& basis,
                                const Eigen::MatrixXd& coefficients, int p, int subcells) {
  const Partition& partition = basis.partition();
  require(coefficients.rows() == partition.size() && coefficients.cols() == basis.per_patch(),
          "coefficient table does not match the poly basis");
  std::vector<std::array<int, 2>> derivatives;
  if (basis.dim() == 1) {
    derivatives.push_back({p, 0});
  } else {
    for (int b = 0; b <= p; ++b) derivatives.push_back({p - b, b});
  }
  double total = 0;
  for (Index i = 0; i < partition.size(); ++i) {
    for_each_patch_quadrature_point(partition, i, subcells, [&](const Point& x, double w) {
      for (const auto& [dx, dy] : derivatives) {
        const double diff = u(x, dx, dy) - coefficients.row(i).dot(basis.evaluate(i, x, dx, dy));
        total += w * diff * diff;
      }
    });
  }
  return total;
}

ProjectionRateResult projection_error_rate(int k, int p, const FunctionJet& u,
                                           const std::vector<Index>& levels, int dim) {
  require(levels.size() >= 3, "projection_error_rate needs at least 3 levels");
  require(p >= 0 && p < k, "seminorm order must satisfy 0 <= p < k");
  ProjectionRateResult result;
  std::vector<std::pair<double, double>> points;
  for (Index m : levels) {
    auto partition = std::make_shared<const Partition>(dim, m);
    PolyBasis basis(partition, k);
    const Eigen::MatrixXd coeffs = project_onto_poly(u, basis);
    const double err = std::sqrt(projection_error_squared(u, basis, coeffs, p));
    result.levels.push_back(m);
    result.h.push_back(partition->h());
    result.errors.push_back(err);
    points.emplace_back(partition->h(), err);
  }
  result.fit = rate_fit<double>(points);
  return result;
}

}  // namespace opcomp
