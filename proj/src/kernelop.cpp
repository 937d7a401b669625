#include "opcomp/kernelop.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "opcomp/error.hpp"
#include "opcomp/parallel.hpp"

namespace opcomp {

QuadratureGrid midpoint_grid(int dim, Index n_per_axis) {
  require(dim == 1 || dim == 2, "grid dimension must be 1 or 2");
  require(n_per_axis >= 1, "grid needs at least one point per axis");
  QuadratureGrid grid;
  grid.dim = dim;
  const double h = 1.0 / static_cast<double>(n_per_axis);
  const Index ny = dim == 2 ? n_per_axis : 1;
  grid.nodes.reserve(static_cast<std::size_t>(n_per_axis * ny));
  for (Index j = 0; j < ny; ++j)
    for (Index i = 0; i < n_per_axis; ++i) grid.nodes.emplace_back((i + 0.5) * h, dim == 2 ? (j + 0.5) * h : 0.0);
  grid.weights = Eigen::VectorXd::Constant(n_per_axis * ny, dim == 2 ? h * h : h);
  return grid;
}

KernelFunction exponential_kernel(double rho, double sigma) {
  require(rho > 0, "kernel length scale must be positive");
  return [rho, s2 = sigma * sigma](const Point& x, const Point& y) { return s2 * std::exp(-(x - y).norm() / rho); };
}

KernelFunction matern_kernel(double nu, double rho, double sigma) {
  require(nu > 0 && rho > 0, "Matern smoothness and length scale must be positive");
  const double s2 = sigma * sigma;
  const double scale = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  return [=](const Point& x, const Point& y) {
    const double z = std::sqrt(2.0 * nu) * (x - y).norm() / rho;
    if (z == 0.0) return s2;
    return s2 * scale * std::pow(z, nu) * std::cyl_bessel_k(nu, z);
  };
}

KernelOperator KernelOperator::from_kernel(const KernelFunction& kernel, QuadratureGrid grid) {
  require(grid.size() > 0, "kernel operator needs a nonempty grid");
  KernelOperator op;
  const Index n = grid.size();
  op.kernel_.resize(n, n);
  parallel_for(n, [&](std::ptrdiff_t j) {
    for (Index i = 0; i <= j; ++i) op.kernel_(i, j) = kernel(grid.nodes[i], grid.nodes[j]);
  });
  op.kernel_.triangularView<Eigen::StrictlyLower>() = op.kernel_.transpose();
  op.grid_ = std::move(grid);
  return op;
}

KernelOperator KernelOperator::identity(QuadratureGrid grid) {
  require(grid.size() > 0, "kernel operator needs a nonempty grid");
  KernelOperator op;
  op.identity_ = true;
  op.kernel_ = grid.weights.cwiseInverse().asDiagonal();
  op.grid_ = std::move(grid);
  return op;
}

Eigen::MatrixXd KernelOperator::apply(const Eigen::MatrixXd& f) const {
  require(f.rows() == size(), "grid function has the wrong size");
  if (identity_) return f;
  return kernel_ * (grid_.weights.asDiagonal() * f);
}

Eigen::MatrixXd KernelOperator::symmetric_form() const {
  if (identity_) return Eigen::MatrixXd::Identity(size(), size());
  const Eigen::VectorXd s = grid_.weights.cwiseSqrt();
  return s.asDiagonal() * kernel_ * s.asDiagonal();
}

Eigen::MatrixXd sample_poly_basis(const PolyBasis& basis, const QuadratureGrid& grid) {
  require(basis.dim() == grid.dim, "poly basis and grid dimensions differ");
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(grid.size(), basis.size());
  const Index Q = basis.per_patch();
  for (Index a = 0; a < grid.size(); ++a) {
    const Index i = basis.partition().locate(grid.nodes[a]);
    P.block(a, basis.column(i, 0), 1, Q) = basis.evaluate(i, grid.nodes[a]).transpose();
  }
  return P;
}

Eigen::MatrixXd theta_matrix(const KernelOperator& K, const PolyBasis& basis) {
  const Eigen::MatrixXd WP = K.grid().weights.asDiagonal() * sample_poly_basis(basis, K.grid());
  Eigen::MatrixXd theta = WP.transpose() * K.apply(sample_poly_basis(basis, K.grid()));
  theta = 0.5 * (theta + theta.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(theta, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0), lmax = eig.eigenvalues()(theta.rows() - 1);
  if (!(lmax > 0) || lmin <= 1e-13 * lmax) {
    throw Error(ErrorKind::DegenerateCompression,
                "Theta is numerically singular: smallest eigenvalue " + std::to_string(lmin) + " against largest " +
                    std::to_string(lmax));
  }
  return theta;
}

CompressedOperator compressed_operator(const KernelOperator& K, const PolyBasis& basis) {
  CompressedOperator c;
  c.theta = theta_matrix(K, basis);
  const Eigen::MatrixXd kphi = K.apply(sample_poly_basis(basis, K.grid()));
  Eigen::LLT<Eigen::MatrixXd> llt(c.theta);
  c.psi = llt.solve(kphi.transpose()).transpose();
  c.middle = c.theta;
  return c;
}

KernelEigensystem kernel_eigensystem(const KernelOperator& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K.symmetric_form());
  return {eig.eigenvalues().reverse(), eig.eigenvectors().rowwise().reverse()};
}

CompressedOperator eigen_compressed(const KernelOperator& K, const KernelEigensystem& eigen, Index n) {
  require(n >= 0 && n < K.size(), "eigen compression rank must be below the grid size");
  require(eigen.vectors.rows() == K.size(), "eigensystem does not match the kernel grid");
  CompressedOperator c;
  c.psi = K.grid().weights.cwiseSqrt().cwiseInverse().asDiagonal() * eigen.vectors.leftCols(n);
  c.middle = eigen.values.head(n).asDiagonal();
  return c;
}

CompressedOperator eigen_compressed(const KernelOperator& K, Index n) {
  return eigen_compressed(K, kernel_eigensystem(K), n);
}

CompressionError compression_error(const KernelOperator& K, const CompressedOperator& C,
                                   const LanczosOptions& options) {
  require(C.psi.rows() == K.size() && C.psi.cols() == C.middle.rows() && C.middle.rows() == C.middle.cols(),
          "compressed operator does not match the kernel grid");
  const Eigen::VectorXd s = K.grid().weights.cwiseSqrt();
  const Eigen::MatrixXd B = s.asDiagonal() * C.psi;
  const Eigen::MatrixXd& G = K.kernel_matrix();
  const bool identity = K.is_identity();
  auto apply = [&](const auto& x, Eigen::VectorXd& y) {
    if (identity) {
      y = x;
    } else {
      const Eigen::VectorXd sx = s.cwiseProduct(x);
      y.noalias() = G * sx;
      y = s.cwiseProduct(y);
    }
    if (B.cols() > 0) y.noalias() -= B * (C.middle * (B.transpose() * x));
  };
  const auto result = lanczos_extreme<double>(K.size(), apply, options);
  if (!result.converged) {
    throw Error(ErrorKind::NumericalFailure, "compression error eigen iteration did not converge (residual " +
                                                 std::to_string(result.residual) + " after " +
                                                 std::to_string(result.iterations) + " steps)");
  }
  return {result.largest_magnitude, result.residual, result.iterations};
}

Eigen::VectorXd eigen_spectrum(const KernelOperator& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K.symmetric_form(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

double eigen_baseline(const KernelOperator& K, Index n) {
  require(n >= 0 && n < K.size(), "baseline index must be below the grid size");
  return eigen_spectrum(K)(n);
}

}  // namespace opcomp
