#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "opcomp/mesh.hpp"
#include "opcomp/rate.hpp"

namespace opcomp {

/// Smooth function with partial derivatives: f(x, dx, dy) = d^{dx+dy} f / dx^dx dy^dy.
using FunctionJet = std::function<double(const Point& x, int dx, int dy)>;

/// Per-patch orthogonal polynomials of total degree <= k-1, normalized so that
/// the patch Gram matrix is |tau_i| times the identity. Global index of
/// (patch i, member q) is i*Q + q.
class PolyBasis {
 public:
  PolyBasis(std::shared_ptr<const Partition> partition, int k);

  const Partition& partition() const { return *partition_; }
  std::shared_ptr<const Partition> partition_ptr() const { return partition_; }
  int k() const { return k_; }
  int dim() const { return partition_->dim(); }
  Index per_patch() const { return static_cast<Index>(exponents_.size()); }
  Index size() const { return partition_->size() * per_patch(); }
  Index column(Index patch, Index q) const { return patch * per_patch() + q; }

  /// Graded monomial exponents (x^a y^b), constant first.
  const std::vector<std::array<int, 2>>& exponents() const { return exponents_; }
  /// Row q holds the coefficients of phi_q in the scaled monomials ((x-x_i)/h)^e_t.
  /// Identical for every patch of a uniform partition.
  const Eigen::MatrixXd& coefficients(Index /*patch*/) const { return coefficients_; }

  /// Values (or the given partial derivative) of all Q members of patch i at x.
  /// x is not required to lie in the patch; callers restrict to supp = tau_i.
  Eigen::VectorXd evaluate(Index patch, const Point& x, int dx = 0, int dy = 0) const;

 private:
  std::shared_ptr<const Partition> partition_;
  int k_;
  std::vector<std::array<int, 2>> exponents_;
  Eigen::MatrixXd coefficients_;
};

PolyBasis local_poly_basis(std::shared_ptr<const Partition> partition, int k);

/// Number of d-variate polynomials of degree <= k-1.
Index poly_space_dimension(int k, int dim);

/// Gauss points (5 per axis) on `subcells`^dim sub-cells of a patch; the
/// callback receives the physical point and its weight.
void for_each_patch_quadrature_point(const Partition& partition, Index patch, int subcells,
                                     const std::function<void(const Point&, double)>& visit);

/// Coefficient table (patches x Q) of the L2 projection Pi_i u on every patch.
Eigen::MatrixXd project_onto_poly(const FunctionJet& u, const PolyBasis& basis, int subcells = 4);

/// sum_i |u - Pi_i u|^2_{p,2,tau_i}, the broken H^p seminorm of the projection error.
double projection_error_squared(const FunctionJet& u, const PolyBasis& basis,
                                const Eigen::MatrixXd& coefficients, int p, int subcells = 4);

struct ProjectionRateResult {
  std::vector<Index> levels;
  std::vector<double> h;
  std::vector<double> errors;
  RateFit<double> fit;
};

/// Fitted log-log slope of |u - Pi u|_p against h over the given patch counts.
ProjectionRateResult projection_error_rate(int k, int p, const FunctionJet& u,
                                           const std::vector<Index>& levels, int dim = 1);

}  // namespace opcomp
