#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "opcomp/lanczos.hpp"
#include "opcomp/mesh.hpp"
#include "opcomp/polyspace.hpp"

namespace opcomp {

/// Quadrature nodes and weights on the unit interval/square.
struct QuadratureGrid {
  int dim = 1;
  std::vector<Point> nodes;
  Eigen::VectorXd weights;

  Index size() const { return weights.size(); }
};

/// Composite midpoint rule with n points per axis.
QuadratureGrid midpoint_grid(int dim, Index n_per_axis);

using KernelFunction = std::function<double(const Point&, const Point&)>;

/// sigma^2 exp(-|x-y|/rho).
KernelFunction exponential_kernel(double rho = 1.0, double sigma = 1.0);
/// Matern covariance with smoothness nu; nu = 1/2 is the exponential kernel.
KernelFunction matern_kernel(double nu, double rho = 1.0, double sigma = 1.0);

/// Integral operator discretized on a quadrature grid:
/// (K f)(x_a) = sum_b w_b K(x_a, x_b) f(x_b).
class KernelOperator {
 public:
  static KernelOperator from_kernel(const KernelFunction& kernel, QuadratureGrid grid);
  /// The identity operator (Gram matrix = mass matrix).
  static KernelOperator identity(QuadratureGrid grid);

  const QuadratureGrid& grid() const { return grid_; }
  Index size() const { return grid_.size(); }
  bool is_identity() const { return identity_; }
  /// Kernel matrix K(x_a, x_b); for the identity this is W^{-1}.
  const Eigen::MatrixXd& kernel_matrix() const { return kernel_; }
  /// Grid values of K f for grid values f.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& f) const;
  /// W^{1/2} K W^{1/2}, the symmetric L2 form of the operator.
  Eigen::MatrixXd symmetric_form() const;

 private:
  QuadratureGrid grid_;
  Eigen::MatrixXd kernel_;
  bool identity_ = false;
};

/// Grid values of every phi_{i,q} (grid size x mQ), zero outside tau_i.
Eigen::MatrixXd sample_poly_basis(const PolyBasis& basis, const QuadratureGrid& grid);

/// Theta_{iq,jq'} = (K phi_{iq}, phi_{jq'}) by quadrature.
Eigen::MatrixXd theta_matrix(const KernelOperator& K, const PolyBasis& basis);

/// Compressed operator Psi K_n Psi^T with Psi given by grid values.
struct CompressedOperator {
  Eigen::MatrixXd psi;     // grid size x n
  Eigen::MatrixXd middle;  // K_n, n x n
  Eigen::MatrixXd theta;   // Theta when built from a poly basis, else empty

  Index rank() const { return middle.rows(); }
  /// Kernel matrix of the compressed operator, Psi K_n Psi^T.
  Eigen::MatrixXd kernel_matrix() const { return psi * middle * psi.transpose(); }
};

/// Psi = (K Phi) Theta^{-1} and K_n = Theta.
CompressedOperator compressed_operator(const KernelOperator& K, const PolyBasis& basis);

/// Eigenpairs of the weighted Gram operator W^{1/2} G W^{1/2}, largest first.
struct KernelEigensystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // orthonormal columns
};
KernelEigensystem kernel_eigensystem(const KernelOperator& K);

/// Compression from the leading n eigenfunctions (Psi = eigenfunctions, K_n = diag(lambda)).
CompressedOperator eigen_compressed(const KernelOperator& K, const KernelEigensystem& eigen, Index n);
CompressedOperator eigen_compressed(const KernelOperator& K, Index n);

struct CompressionError {
  double value = 0;
  double residual = 0;
  int iterations = 0;
};

/// L2 operator norm of K - Psi K_n Psi^T: the largest-magnitude eigenvalue of
/// W^{1/2} (G - Psi K_n Psi^T) W^{1/2}, by Lanczos.
CompressionError compression_error(const KernelOperator& K, const CompressedOperator& C,
                                   const LanczosOptions& options = {});

/// Eigenvalues of the weighted Gram operator in descending order.
Eigen::VectorXd eigen_spectrum(const KernelOperator& K);

/// lambda_{n+1}: the (n+1)-th largest eigenvalue (n = 0 gives lambda_1).
double eigen_baseline(const KernelOperator& K, Index n);

}  // namespace opcomp
