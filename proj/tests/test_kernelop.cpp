#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>
#include <numbers>

#include "generators.hpp"
#include "opcomp/error.hpp"
#include "opcomp/kernelop.hpp"

using namespace opcomp;

namespace {

// Eigenvalues of exp(-|x-y|) on L2(0,1): lambda = 2/(1+w^2), with w the
// positive roots of 2 w cos w + (1 - w^2) sin w = 0 (one root per (j pi, (j+1) pi)).
std::vector<double> analytic_exp_eigenvalues(int count) {
  auto f = [](double w) { return 2 * w * std::cos(w) + (1 - w * w) * std::sin(w); };
  std::vector<double> out;
  const double pi = std::numbers::pi;
  for (int j = 0; j < count; ++j) {
    double lo = j * pi + 1e-12, hi = (j + 1) * pi - 1e-12;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(lo) * f(mid) <= 0 ? hi : lo) = mid;
    }
    const double w = 0.5 * (lo + hi);
    out.push_back(2.0 / (1.0 + w * w));
  }
  return out;
}

KernelOperator exp_operator(Index n) { return KernelOperator::from_kernel(exponential_kernel(), midpoint_grid(1, n)); }

}  // namespace

TEST_CASE("kernels") {
  const Point x(0.2, 0), y(0.7, 0);
  CHECK(exponential_kernel()(x, y) == doctest::Approx(std::exp(-0.5)));
  CHECK(exponential_kernel(0.5, 2.0)(x, y) == doctest::Approx(4 * std::exp(-1.0)));
  gen::Source src(1);
  for (int i = 0; i < 50; ++i) {
    const Point a(src.uniform(0, 1), 0), b(src.uniform(0, 1), 0);
    CHECK(matern_kernel(0.5, 0.7, 1.3)(a, b) == doctest::Approx(exponential_kernel(0.7, 1.3)(a, b)).epsilon(1e-12));
    CHECK(matern_kernel(1.5)(a, b) == matern_kernel(1.5)(b, a));
  }
  // nu = 3/2: (1 + sqrt(3) r) exp(-sqrt(3) r)
  const double r = 0.4;
  CHECK(matern_kernel(1.5)(Point(0, 0), Point(r, 0)) ==
        doctest::Approx((1 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r)).epsilon(1e-12));
  CHECK(matern_kernel(2.5)(x, x) == 1.0);
}

TEST_CASE("Theta for one patch and a constant") {
  auto p = std::make_shared<const Partition>(1, 1);
  const Eigen::MatrixXd theta = theta_matrix(exp_operator(4096), PolyBasis(p, 1));
  CHECK(theta(0, 0) == doctest::Approx(2.0 / std::exp(1.0)).epsilon(1e-6));
}

TEST_CASE("Theta for the identity is |tau| times identity") {
  auto p = std::make_shared<const Partition>(1, 4);
  const Eigen::MatrixXd theta = theta_matrix(KernelOperator::identity(midpoint_grid(1, 256)), PolyBasis(p, 1));
  CHECK(theta.isApprox(0.25 * Eigen::MatrixXd::Identity(4, 4), 1e-12));
}

TEST_CASE("Theta is symmetric positive definite") {
  auto p = std::make_shared<const Partition>(1, 4);
  const auto K = exp_operator(512);
  for (int k : {1, 2}) {
    const Eigen::MatrixXd theta = theta_matrix(K, PolyBasis(p, k));
    CHECK((theta - theta.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * theta.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(theta);
    CHECK(eig.eigenvalues().minCoeff() > 0);
  }
}

TEST_CASE("Theta singularity is reported") {
  // k = 2 on 4 patches with only one grid point per patch cannot resolve linears.
  auto p = std::make_shared<const Partition>(1, 4);
  try {
    theta_matrix(exp_operator(4), PolyBasis(p, 2));
    FAIL("expected degenerate compression");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateCompression);
  }
}

TEST_CASE("compressed operator identities") {
  auto p = std::make_shared<const Partition>(1, 4);
  const auto K = exp_operator(256);
  PolyBasis basis(p, 2);
  const CompressedOperator c = compressed_operator(K, basis);
  const Eigen::MatrixXd P = sample_poly_basis(basis, K.grid());
  const Eigen::MatrixXd W = K.grid().weights.asDiagonal();

  SUBCASE("biorthogonality Psi^T W Phi = I") {
    CHECK((c.psi.transpose() * W * P).isApprox(Eigen::MatrixXd::Identity(8, 8), 1e-10));
  }
  SUBCASE("range exactness on Phi") {
    const Eigen::MatrixXd compressed = c.kernel_matrix() * W * P;
    CHECK((compressed - K.apply(P)).norm() < 1e-10 * K.apply(P).norm());
  }
  SUBCASE("symmetric positive semidefinite with rank n") {
    auto p2 = std::make_shared<const Partition>(1, 2);
    const CompressedOperator c2 = compressed_operator(K, PolyBasis(p2, 1));
    const Eigen::MatrixXd G = c2.kernel_matrix();
    CHECK((G - G.transpose()).norm() < 1e-12 * G.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    const auto& ev = eig.eigenvalues();
    CHECK(ev.minCoeff() > -1e-12 * ev.maxCoeff());
    CHECK((ev.array() > 1e-10 * ev.maxCoeff()).count() == 2);
  }
}

TEST_CASE("eigen spectrum of the exponential kernel") {
  const auto K = exp_operator(1024);
  const Eigen::VectorXd spectrum = eigen_spectrum(K);
  const auto exact = analytic_exp_eigenvalues(8);
  for (int j = 0; j < 8; ++j) CHECK(spectrum(j) == doctest::Approx(exact[static_cast<std::size_t>(j)]).epsilon(1e-4));
  for (Index j = 1; j < spectrum.size(); ++j) CHECK(spectrum(j) <= spectrum(j - 1));
  CHECK(eigen_baseline(K, 0) == spectrum(0));
  CHECK_THROWS_AS(eigen_baseline(K, 1024), Error);
  const Eigen::VectorXd ones = eigen_spectrum(KernelOperator::identity(midpoint_grid(1, 16)));
  CHECK(ones.isApprox(Eigen::VectorXd::Ones(16)));
}

TEST_CASE("compression error against the eigen baseline") {
  const auto K = exp_operator(1024);
  const Eigen::VectorXd spectrum = eigen_spectrum(K);

  SUBCASE("empty basis gives lambda_1") {
    CompressedOperator empty{Eigen::MatrixXd(1024, 0), Eigen::MatrixXd(0, 0), {}};
    CHECK(compression_error(K, empty).value == doctest::Approx(spectrum(0)).epsilon(1e-8));
  }
  SUBCASE("eigenbasis gives lambda_{n+1}") {
    for (Index n : {1, 7, 32}) {
      const double e = compression_error(K, eigen_compressed(K, n)).value;
      CHECK(std::abs(e - spectrum(n)) <= 1e-8 * spectrum(n));
    }
  }
  SUBCASE("poly compression is within a factor 4 of the baseline") {
    auto p = std::make_shared<const Partition>(1, 64);
    const double e = compression_error(K, compressed_operator(K, PolyBasis(p, 1))).value;
    CHECK(e >= spectrum(64) * (1 - 1e-8));
    CHECK(e <= 4 * spectrum(64));
  }
}
