#include "opcomp/basis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "opcomp/error.hpp"
#include "opcomp/parallel.hpp"

namespace opcomp {

namespace {

constexpr double kSchurRcond = 1e-13;
constexpr double kConstraintTolerance = 1e-10;
constexpr int kRefinementSweeps = 3;

}  // namespace

SaddlePointSolver::SaddlePointSolver(const SparseMatrix& A, const Eigen::MatrixXd& C, ErrorKind rank_error)
    : A_(A), C_(C) {
  require(A.rows() == A.cols() && A.rows() == C.rows(), "saddle point blocks have inconsistent sizes");
  require(C.cols() > 0, "saddle point problem needs at least one constraint", rank_error);
  ldlt_.compute(A);
  if (ldlt_.info() != Eigen::Success || (ldlt_.vectorD().array() <= 0).any()) {
    throw Error(ErrorKind::NumericalFailure, "sparse factorization of the energy matrix failed");
  }
  Y_ = ldlt_.solve(C_);
  S_ = C_.transpose() * Y_;
  S_ = 0.5 * (S_ + S_.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S_, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0), lmax = eig.eigenvalues()(S_.rows() - 1);
  if (!(lmax > 0) || lmin <= kSchurRcond * lmax) {
    throw Error(rank_error, "constraint Schur complement is singular (eigenvalue ratio " +
                                std::to_string(lmax > 0 ? lmin / lmax : 0.0) + ")" +
                                (rank_error == ErrorKind::InfeasibleLocalization
                                     ? "; the oversampling region is too small, use a larger radius"
                                     : ""));
  }
  schur_llt_.compute(S_);
  if (schur_llt_.info() != Eigen::Success) throw Error(rank_error, "Cholesky of the Schur complement failed");
}

Eigen::MatrixXd SaddlePointSolver::solve(const Eigen::MatrixXd& E) const {
  require(E.rows() == C_.cols(), "right-hand side does not match the constraint count");
  // KKT system A X - C M = 0, C^T X = E. Forming X = Y S^{-1} E cancels global
  // columns of Y into local ones, so both residual blocks are refined.
  Eigen::MatrixXd M = schur_llt_.solve(E);
  Eigen::MatrixXd X = Y_ * M;
  for (int sweep = 0; sweep < kRefinementSweeps; ++sweep) {
    const Eigen::MatrixXd G = C_ * M - A_ * X;
    const Eigen::MatrixXd H = E - C_.transpose() * X;
    const Eigen::MatrixXd AG = ldlt_.solve(G);
    const Eigen::MatrixXd dM = schur_llt_.solve(H - C_.transpose() * AG);
    X += AG + Y_ * dM;
    M += dM;
  }
  return X;
}

Eigen::MatrixXd SaddlePointSolver::solve_energy(const Eigen::MatrixXd& b) const { return ldlt_.solve(b); }

BasisFamily solve_global_basis(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints) {
  require(constraints.rows() == fs.size() && constraints.cols() == basis.size(),
          "constraint matrix does not match the fine space and poly basis");
  const Eigen::MatrixXd C(constraints);
  const SaddlePointSolver solver(fs.energy(), C);
  BasisFamily family;
  family.per_patch = basis.per_patch();
  family.psi = solver.solve(Eigen::MatrixXd::Identity(basis.size(), basis.size()));
  family.schur = solver.schur();
  family.energies = (family.psi.transpose() * (fs.energy() * family.psi)).diagonal();
  family.max_constraint_residual =
      (C.transpose() * family.psi - Eigen::MatrixXd::Identity(basis.size(), basis.size())).cwiseAbs().maxCoeff();
  return family;
}

BasisFamily solve_global_basis(const FineSpace& fs, const PolyBasis& basis) {
  return solve_global_basis(fs, basis, assemble_constraint_matrix(fs, basis));
}

std::vector<Index> active_dofs(const FineSpace& fs, const std::vector<Index>& cell_patch, const PatchSet& region) {
  std::vector<char> inside(cell_patch.size(), 0);
  for (std::size_t c = 0; c < cell_patch.size(); ++c) inside[c] = region.contains(cell_patch[c]) ? 1 : 0;
  std::vector<Index> active;
  for (Index d = 0; d < fs.size(); ++d) {
    const auto& cells = fs.dof_cells()[static_cast<std::size_t>(d)];
    if (std::all_of(cells.begin(), cells.end(), [&](Index c) { return inside[static_cast<std::size_t>(c)] != 0; }))
      active.push_back(d);
  }
  return active;
}

Eigen::MatrixXd solve_localized_patch(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                      const std::vector<Index>& cell_patch, Index i, double r, PatchSet* region_out) {
  require(constraints.rows() == fs.size() && constraints.cols() == basis.size(),
          "constraint matrix does not match the fine space and poly basis");
  const PatchSet region = oversampling_region(basis.partition_ptr(), i, r);
  const std::vector<Index> active = active_dofs(fs, cell_patch, region);
  if (active.empty()) {
    throw Error(ErrorKind::InfeasibleLocalization,
                "no fine DOFs are supported inside S_r for patch " + std::to_string(i) + " at r = " +
                    std::to_string(r) + "; use a larger radius");
  }
  std::vector<Index> local(static_cast<std::size_t>(fs.size()), -1);
  for (std::size_t a = 0; a < active.size(); ++a) local[static_cast<std::size_t>(active[a])] = static_cast<Index>(a);
  const auto n_loc = static_cast<Index>(active.size());

  std::vector<Eigen::Triplet<double>> triplets;
  const SparseMatrix& A = fs.energy();
  for (Index a = 0; a < n_loc; ++a)
    for (SparseMatrix::InnerIterator it(A, active[static_cast<std::size_t>(a)]); it; ++it) {
      const Index b = local[static_cast<std::size_t>(it.row())];
      if (b >= 0) triplets.emplace_back(b, a, it.value());
    }
  SparseMatrix A_loc(n_loc, n_loc);
  A_loc.setFromTriplets(triplets.begin(), triplets.end());

  const Index Q = basis.per_patch();
  Eigen::MatrixXd C_loc = Eigen::MatrixXd::Zero(n_loc, region.size() * Q);
  Index center_slot = -1;
  for (Index s = 0; s < region.size(); ++s) {
    const Index j = region.members[static_cast<std::size_t>(s)];
    if (j == i) center_slot = s;
    for (Index q = 0; q < Q; ++q)
      for (SparseMatrix::InnerIterator it(constraints, basis.column(j, q)); it; ++it) {
        const Index b = local[static_cast<std::size_t>(it.row())];
        if (b >= 0) C_loc(b, s * Q + q) = it.value();
      }
  }
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(region.size() * Q, Q);
  E.block(center_slot * Q, 0, Q, Q).setIdentity();

  const SaddlePointSolver solver(A_loc, C_loc, ErrorKind::InfeasibleLocalization);
  const Eigen::MatrixXd X = solver.solve(E);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(fs.size(), Q);
  for (Index a = 0; a < n_loc; ++a) psi.row(active[static_cast<std::size_t>(a)]) = X.row(a);
  if (region_out != nullptr) *region_out = region;
  return psi;
}

LocalizedMember solve_localized_basis(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                      Index i, Index q, double r) {
  require(q >= 0 && q < basis.per_patch(), "poly member index out of range");
  const auto cell_patch = cell_patches(fs, basis.partition());
  LocalizedMember member;
  const Eigen::MatrixXd all = solve_localized_patch(fs, basis, constraints, cell_patch, i, r, &member.region);
  member.psi = all.col(q);
  member.active_dofs = static_cast<Index>(active_dofs(fs, cell_patch, member.region).size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.size());
  e(basis.column(i, q)) = 1.0;
  member.constraint_residual = (constraints.transpose() * member.psi - e).cwiseAbs().maxCoeff();
  member.energy = member.psi.dot(fs.energy() * member.psi);
  return member;
}

BasisFamily solve_localized_family(const FineSpace& fs, const PolyBasis& basis, const SparseMatrix& constraints,
                                   double r) {
  const auto cell_patch = cell_patches(fs, basis.partition());
  const Index m = basis.partition().size(), Q = basis.per_patch();
  BasisFamily family;
  family.per_patch = Q;
  family.localized = true;
  family.radius = r;
  family.psi = Eigen::MatrixXd::Zero(fs.size(), basis.size());
  family.support.assign(static_cast<std::size_t>(basis.size()), {});
  parallel_for(m, [&](std::ptrdiff_t i) {
    PatchSet region;
    const Eigen::MatrixXd block = solve_localized_patch(fs, basis, constraints, cell_patch, i, r, &region);
    family.psi.middleCols(i * Q, Q) = block;
    for (Index q = 0; q < Q; ++q) family.support[static_cast<std::size_t>(basis.column(i, q))] = region.members;
  });
  family.energies = (family.psi.transpose() * (fs.energy() * family.psi)).diagonal();
  family.max_constraint_residual =
      (constraints.transpose() * family.psi - Eigen::MatrixXd::Identity(basis.size(), basis.size()))
          .cwiseAbs()
          .maxCoeff();
  return family;
}

Eigen::MatrixXd family_stiffness(const FineSpace& fs, const BasisFamily& family) {
  Eigen::MatrixXd L = family.psi.transpose() * (fs.energy() * family.psi);
  return 0.5 * (L + L.transpose());
}

LocalizationError localization_error(const FineSpace& fs, const Eigen::VectorXd& psi,
                                     const Eigen::VectorXd& psi_loc) {
  require(psi.size() == fs.size() && psi_loc.size() == fs.size(), "basis vectors do not match the fine space");
  const SparseMatrix& A = fs.energy();
  const Eigen::VectorXd diff = psi_loc - psi;
  const double norm2 = psi.dot(A * psi);
  const double direct2 = diff.dot(A * diff);
  const double radicand = diff.dot(A * (psi_loc + psi));
  if (radicand < -1e-10 * norm2) {
    throw Error(ErrorKind::NumericalFailure, "localized energy below the global energy (radicand " +
                                                 std::to_string(radicand) + "); solver inconsistency");
  }
  return {std::sqrt(std::max(0.0, direct2)), std::sqrt(std::max(0.0, radicand))};
}

EnergySplit energy_split(const FineSpace& fs, const BasisFamily& global, const SparseMatrix& constraints,
                         const Eigen::VectorXd& f) {
  const SparseMatrix& A = fs.energy();
  const Eigen::VectorXd w = constraints.transpose() * f;
  const Eigen::VectorXd pf = global.psi * w;
  const Eigen::VectorXd rest = f - pf;
  return {f.dot(A * f), pf.dot(A * pf), rest.dot(A * rest)};
}

DecayProfile decay_profile(const FineSpace& fs, const Eigen::VectorXd& psi, const Partition& partition, Index i) {
  require(psi.size() == fs.size(), "basis vector does not match the fine space");
  require(i >= 0 && i < partition.size(), "patch index out of range");
  const Point center = partition.patch(i).centroid;
  const Index cells = fs.cell_count();
  std::vector<std::pair<double, double>> cell_energy(static_cast<std::size_t>(cells));
  for (Index c = 0; c < cells; ++c) {
    const auto raw = fs.cell_raw(c);
    Eigen::VectorXd u(static_cast<Index>(raw.size()));
    for (std::size_t a = 0; a < raw.size(); ++a) {
      const Index d = fs.dof(raw[a]);
      u(static_cast<Index>(a)) = d >= 0 ? psi(d) : 0.0;
    }
    const double e = std::max(0.0, u.dot(fs.cell_energy(c) * u));
    cell_energy[static_cast<std::size_t>(c)] = {distance_to_box(center, fs.cell_lower(c), fs.cell_upper(c), fs.dim()), e};
  }
  std::sort(cell_energy.begin(), cell_energy.end());
  // suffix[k] = energy of cells k.. in distance order
  std::vector<double> suffix(cell_energy.size() + 1, 0.0);
  for (std::size_t k = cell_energy.size(); k-- > 0;) suffix[k] = suffix[k + 1] + cell_energy[k].second;

  DecayProfile profile;
  profile.center = i;
  const double h = partition.h();
  const double r_max = partition.domain_diameter();
  for (Index j = 0; 0.5 * h * j <= r_max; ++j) {
    const double r = 0.5 * h * j;
    const auto first = std::lower_bound(cell_energy.begin(), cell_energy.end(), std::pair{r, -1.0});
    profile.radii.push_back(r);
    profile.tails.push_back(suffix[static_cast<std::size_t>(first - cell_energy.begin())]);
  }
  const double floor = kTailFloor * profile.tails.front();
  if (!(profile.tails.front() > 0)) throw Error(ErrorKind::FitUndefined, "all tail energies vanish");
  std::vector<std::pair<double, double>> points;
  for (std::size_t k = 0; k < profile.radii.size(); ++k)
    if (profile.tails[k] > floor) points.emplace_back(profile.radii[k], profile.tails[k]);
  const auto fit = semilog_fit<double>(points);
  profile.fitted_points = static_cast<Index>(points.size());
  profile.intercept = fit.intercept;
  profile.r_squared = fit.r_squared;
  profile.decay_length = fit.slope < 0 ? -1.0 / (fit.slope * h) : std::numeric_limits<double>::infinity();
  return profile;
}

void write_member_csv(std::ostream& out, const Eigen::VectorXd& psi) {
  out.precision(17);
  out << "dof,coefficient\n";
  for (Index d = 0; d < psi.size(); ++d) out << d << ',' << psi(d) << '\n';
}

void write_sampled_csv(std::ostream& out, const FineSpace& fs, const Eigen::VectorXd& psi, Index resolution) {
  require(resolution >= 2, "sampling needs at least 2 points per axis");
  out.precision(17);
  const double step = fs.width() / static_cast<double>(resolution - 1);
  if (fs.dim() == 1) {
    out << "x,value\n";
    for (Index a = 0; a < resolution; ++a) {
      const Point x(fs.lower().x() + a * step, 0.0);
      out << x.x() << ',' << fs.evaluate(psi, x) << '\n';
    }
    return;
  }
  out << "x,y,value\n";
  for (Index b = 0; b < resolution; ++b)
    for (Index a = 0; a < resolution; ++a) {
      const Point x(fs.lower().x() + a * step, fs.lower().y() + b * step);
      out << x.x() << ',' << x.y() << ',' << fs.evaluate(psi, x) << '\n';
    }
}

}  // namespace opcomp
