#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <iosfwd>
#include <vector>

#include "opcomp/fem.hpp"
#include "opcomp/mesh.hpp"
#include "opcomp/polyspace.hpp"
#include "opcomp/rate.hpp"

namespace opcomp {

/// min x^T A x subject to C^T x = e, for many right-hand sides e.
///
/// A is factored once (sparse LDL^T); the Schur complement S = C^T A^{-1} C is
/// factored densely. Constraint residuals are polished by iterative refinement.
class SaddlePointSolver {
 public:
  /// `rank_error` is the error kind raised when S is numerically singular.
  SaddlePointSolver(const SparseMatrix& A, const Eigen::MatrixXd& C,
                    ErrorKind rank_error = ErrorKind::DegenerateConstraints);

  /// Minimizers for the columns of E (n x r); returns N x r.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& E) const;
  const Eigen::MatrixXd& schur() const { return S_; }
  /// A^{-1} b.
  Eigen::MatrixXd solve_energy(const Eigen::MatrixXd& b) const;

 private:
  SparseMatrix A_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  Eigen::MatrixXd C_, Y_, S_;
  Eigen::LLT<Eigen::MatrixXd> schur_llt_;
};

/// A family of energy-minimizing functions psi_{i,q}, one column each, ordered
/// like the poly basis columns (i*Q + q).
struct BasisFamily {
  Eigen::MatrixXd psi;                      // N x n fine coefficients
  Index per_patch = 1;
  bool localized = false;
  double radius = 0;                        // localized only
  std::vector<std::vector<Index>> support;  // patches of S_r per column (localized only)
  Eigen::VectorXd energies;                 // psi^T A psi
  double max_constraint_residual = 0;       // max |C^T psi - I|
  Eigen::MatrixXd schur;                    // S_c = C^T A^{-1} C (global only)

  Index size() const { return psi.cols(); }
};

BasisFamily solve_global_basis(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints);
BasisFamily solve_global_basis(const FineSpace& fs, const PolyBasis& basis);

/// DOFs whose whole support lies in the patches of `region`.
std::vector<Index> active_dofs(const FineSpace& fs, const std::vector<Index>& cell_patch, const PatchSet& region);

struct LocalizedMember {
  Eigen::VectorXd psi;  // length N, zero outside S_r
  PatchSet region;
  Index active_dofs = 0;
  double constraint_residual = 0;
  double energy = 0;
};

/// psi^loc_{i,q} on S_r = oversampling_region(i, r). Throws infeasible-localization
/// when S_r cannot carry the constraints.
LocalizedMember solve_localized_basis(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                      Index i, Index q, double r);

/// All Q members of patch i (they share S_r), N x Q.
Eigen::MatrixXd solve_localized_patch(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                      const std::vector<Index>& cell_patch, Index i, double r,
                                      PatchSet* region = nullptr);

/// Localized family with a common radius; members are solved in parallel.
BasisFamily solve_localized_family(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                   double r);

/// L_n = Psi^T A Psi.
Eigen::MatrixXd family_stiffness(const FineSpace& fs, const BasisFamily& family);

struct LocalizationError {
  double direct = 0;       // ||psi_loc - psi||_A
  double pythagorean = 0;  // sqrt(||psi_loc||_A^2 - ||psi||_A^2)
};

/// Both forms of the localization error; a radicand below -1e-10 ||psi||_A^2
/// raises numerical-failure.
LocalizationError localization_error(const FineSpace& fs, const Eigen::VectorXd& psi, const Eigen::VectorXd& psi_loc);

/// Split of a feasible function into its part in span(Psi) and the remainder.
struct EnergySplit {
  double total = 0;      // ||f||_A^2
  double projected = 0;  // ||Psi w||_A^2 with w = C^T f
  double remainder = 0;  // ||f - Psi w||_A^2
};
EnergySplit energy_split(const FineSpace& fs, const BasisFamily& global, const SparseMatrix& constraints,
                         const Eigen::VectorXd& f);

struct DecayProfile {
  Index center = 0;
  std::vector<double> radii;
  std::vector<double> tails;  // energy on cells outside B(x_i, r)
  double decay_length = 0;    // l in exp(-r / (l h))
  double intercept = 0;
  double r_squared = 0;
  Index fitted_points = 0;
};

/// Relative threshold below which tails are excluded from the fit.
inline constexpr double kTailFloor = 1e-14;

/// Tail energies at r_j = j h / 2 up to the domain diameter, with a
/// log-linear fit over tails above kTailFloor * tail(0).
DecayProfile decay_profile(const FineSpace& fs, const Eigen::VectorXd& psi, const Partition& partition, Index i);

/// "dof,coefficient" rows.
void write_member_csv(std::ostream& out, const Eigen::VectorXd& psi);
/// "x,value" or "x,y,value" on a uniform grid of `resolution` points per axis.
void write_sampled_csv(std::ostream& out, const FineSpace& fs, const Eigen::VectorXd& psi, Index resolution);

}  // namespace opcomp
