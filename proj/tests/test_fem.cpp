#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <memory>
#include <sstream>

#include "generators.hpp"
#include "opcomp/coefficients.hpp"
#include "opcomp/error.hpp"
#include "opcomp/fem.hpp"
#include "opcomp/rate.hpp"

using namespace opcomp;

namespace {

Eigen::VectorXd solve(const FineSpace& fs, const Eigen::VectorXd& b) {
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(fs.energy());
  REQUIRE(ldlt.info() == Eigen::Success);
  return ldlt.solve(b);
}

// exp(-|x-y|) Green's function error at all nodes for a point load at node j.
double robin_green_error(Index n, Index j, double rho = 1.0, double sigma = 1.0) {
  const FineSpace fs = build_fine_space(ProblemTag::Robin1d, std::nullopt, n, {rho, sigma});
  Eigen::VectorXd e = Eigen::VectorXd::Zero(fs.size());
  e(j) = 1.0;
  const Eigen::VectorXd g = solve(fs, e);
  const double xj = static_cast<double>(j) / n;
  double err = 0;
  for (Index i = 0; i <= n; ++i) {
    const double xi = static_cast<double>(i) / n;
    err = std::max(err, std::abs(g(i) - sigma * sigma * std::exp(-std::abs(xi - xj) / rho)));
  }
  return err;
}

}  // namespace

TEST_CASE("flexural coefficient samples") {
  SUBCASE("zero modes give a = 1") {
    const auto f = CoefficientField::flexural(Eigen::VectorXd::Zero(40), Eigen::VectorXd::Zero(40));
    for (double x : {0.0, 0.3, 1.0}) CHECK(f.scalar(x) == 1.0);
  }
  SUBCASE("sine bound over many samples and seeds") {
    for (std::uint64_t seed : {1u, 42u, 977u}) {
      const auto f = sample_flexural_coefficient(seed);
      double lo = 10, hi = -10;
      for (int i = 0; i < 10000; ++i) {
        const double a = f.scalar(i / 9999.0);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
      CHECK(lo >= 0.5);
      CHECK(hi <= 1.5);
    }
  }
  SUBCASE("deterministic for a fixed seed") {
    const auto a = sample_flexural_coefficient(42), b = sample_flexural_coefficient(42);
    CHECK(a.scalar(0.5) == b.scalar(0.5));
    CHECK(a.zeta1() == b.zeta1());
    CHECK(a.zeta2() == b.zeta2());
    CHECK(sample_flexural_coefficient(43).zeta1() != a.zeta1());
  }
  SUBCASE("mode entries lie in [-1/2, 1/2]") {
    const auto f = sample_flexural_coefficient(8, 200);
    CHECK(f.zeta1().cwiseAbs().maxCoeff() <= 0.5);
    CHECK(f.zeta2().cwiseAbs().maxCoeff() <= 0.5);
    CHECK_THROWS_AS(sample_flexural_coefficient(8, 0), Error);
  }
}

TEST_CASE("plate coefficients") {
  const auto f = sample_plate_coefficients(42);
  gen::Source src(2);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d t = f.plate_terms(Point(src.uniform(0, 1), src.uniform(0, 1)));
    CHECK(t(0) - t(1) == 0.0);
    CHECK(t.minCoeff() > 0);
  }
  const auto zero = CoefficientField::plate(Eigen::VectorXd::Zero(20), Eigen::VectorXd::Zero(20));
  CHECK(zero.plate_terms(Point(0.3, 0.7))(2) == 1.0);
  double lo = 1e9;
  for (int j = 0; j < 256; ++j)
    for (int i = 0; i < 256; ++i) lo = std::min(lo, plate_a20(i / 255.0, j / 255.0));
  CHECK(lo > 0);
}

TEST_CASE("strong ellipticity") {
  const auto c = check_strong_ellipticity(CoefficientField::constant(1.0), 50);
  CHECK(c.first == 1.0);
  CHECK(c.second == 1.0);
  const auto zero = CoefficientField::plate(Eigen::VectorXd::Zero(20), Eigen::VectorXd::Zero(20));
  CHECK(check_strong_ellipticity(zero, 64).second >= 2.0);
  const auto flex = check_strong_ellipticity(sample_flexural_coefficient(42), 1000);
  CHECK(flex.first > 0.5);
  CHECK(flex.first < 1.0);
  CHECK(flex.second > 1.0);
  CHECK(flex.second < 1.5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(check_strong_ellipticity(sample_flexural_coefficient(seed), 200).first > 0);
    CHECK(check_strong_ellipticity(sample_plate_coefficients(seed), 40).first > 0);
  }
}

TEST_CASE("coefficient CSV export") {
  std::ostringstream one, two;
  write_field_csv(one, sample_flexural_coefficient(1), 5);
  write_field_csv(two, sample_plate_coefficients(1), 3);
  const std::string a = one.str(), b = two.str();
  CHECK(a.rfind("x,value\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 6);
  CHECK(b.rfind("x,y,a20,a02,a11\n", 0) == 0);
  CHECK(std::count(b.begin(), b.end(), '\n') == 10);
}

TEST_CASE("Robin discrete Green's function matches exp(-|x-y|)") {
  const double e64 = robin_green_error(64, 20), e128 = robin_green_error(128, 40);
  CHECK(e128 < 2e-5);
  CHECK(e64 / e128 > 3.5);
  CHECK(robin_green_error(512, 100, 0.5, 2.0) < 1e-4);
}

TEST_CASE("clamped beam under unit load") {
  const FineSpace fs = build_fine_space(ProblemTag::Beam1d, std::nullopt, 16);
  CHECK(fs.size() == 2 * 17 - 4);
  const Eigen::VectorXd u = solve(fs, load_vector(fs, [](const Point&) { return 1.0; }));
  CHECK(fs.evaluate(u, Point(0.5, 0)) == doctest::Approx(1.0 / 384).epsilon(1e-10));
  CHECK(fs.evaluate(u, Point(0.25, 0)) == doctest::Approx(0.0625 * 0.5625 / 24).epsilon(1e-10));
}

TEST_CASE("beam energy of the quartic interpolant converges at order 2") {
  const FunctionJet u = [](const Point& p, int dx, int) {
    const double x = p.x();
    if (dx == 0) return x * x * (1 - x) * (1 - x) / 24;
    return (2 * x - 6 * x * x + 4 * x * x * x) / 24;
  };
  std::vector<std::pair<double, double>> pts;
  for (Index n : {4, 8, 16, 32}) {
    const FineSpace fs = build_fine_space(ProblemTag::Beam1d, std::nullopt, n);
    const Eigen::VectorXd ui = interpolate(fs, u);
    const double gap = 1.0 / 720 - ui.dot(fs.energy() * ui);
    REQUIRE(gap > 0);
    pts.emplace_back(1.0 / n, std::sqrt(gap));
  }
  const auto fit = rate_fit<double>(pts);
  CHECK(fit.slope > 1.8);
  CHECK(fit.slope < 2.2);
}

TEST_CASE("clamped plate spline space") {
  const FineSpace fs = build_fine_space(ProblemTag::Plate2d, sample_plate_coefficients(42), 32);
  CHECK(fs.size() == 31 * 31);
  const Eigen::MatrixXd A(fs.energy());
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  CHECK(eig.eigenvalues().minCoeff() > 0);
}

TEST_CASE("energy matrices are symmetric positive definite (property)") {
  gen::Source src(21);
  std::vector<FineSpace> spaces;
  spaces.push_back(build_fine_space(ProblemTag::Robin1d, std::nullopt, 64));
  spaces.push_back(build_fine_space(ProblemTag::Beam1d, sample_flexural_coefficient(3), 64));
  spaces.push_back(build_fine_space(ProblemTag::Plate2d, sample_plate_coefficients(3), 8));
  spaces.push_back(build_custom_space(2, 1, Point(-0.5, -0.5), 1.0, 8));
  for (const FineSpace& fs : spaces) {
    CHECK((Eigen::MatrixXd(fs.energy()) - Eigen::MatrixXd(fs.energy()).transpose()).norm() == 0.0);
    Eigen::LLT<Eigen::MatrixXd> mass(Eigen::MatrixXd(fs.mass()));
    CHECK(mass.info() == Eigen::Success);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = src.sparse_nonzero(fs.size());
      CHECK(x.dot(fs.energy() * x) > 0);
    }
  }
}

TEST_CASE("B-splines form a partition of unity (property)") {
  gen::Source src(4);
  const FineSpace fs = build_custom_space(2, 1, Point(0, 0), 1.0, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const Point x(src.uniform(0, 1), src.uniform(0, 1));
    const Index c = fs.locate_cell(x);
    CHECK(fs.shapes(c, x).sum() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(fs.shapes(c, x, 1, 0).sum()) < 1e-10);
    CHECK(std::abs(fs.shapes(c, x, 1, 1).sum()) < 1e-8);
  }
}

TEST_CASE("custom Dirichlet interval") {
  // -u'' = 1 on (-1/2, 1/2), u = 0 at the ends: u(0) = 1/8.
  const FineSpace fs = build_custom_space(1, 1, Point(-0.5, 0), 1.0, 16);
  const Eigen::VectorXd u = solve(fs, load_vector(fs, [](const Point&) { return 1.0; }));
  CHECK(fs.evaluate(u, Point(0, 0)) == doctest::Approx(0.125).epsilon(1e-10));
  // u'''' = 1 clamped on the same interval: u(0) = 1/(16*24).
  const FineSpace fs2 = build_custom_space(1, 2, Point(-0.5, 0), 1.0, 16);
  const Eigen::VectorXd u2 = solve(fs2, load_vector(fs2, [](const Point&) { return 1.0; }));
  CHECK(fs2.evaluate(u2, Point(0, 0)) == doctest::Approx(1.0 / 384).epsilon(1e-10));
}

TEST_CASE("constraint matrix") {
  auto p = std::make_shared<const Partition>(1, 8);
  const FineSpace fs = build_fine_space(ProblemTag::Robin1d, std::nullopt, 64);
  const double hf = fs.cell_size();

  SUBCASE("k=1 columns integrate hat functions over the patch") {
    const SparseMatrix C = assemble_constraint_matrix(fs, PolyBasis(p, 1));
    const Eigen::MatrixXd Cd(C);
    for (Index j = 0; j < 8; ++j) {
      for (Index a = 0; a <= 64; ++a) {
        double expected = 0;
        if (a > 8 * j && a < 8 * (j + 1)) expected = hf;
        if (a == 8 * j || a == 8 * (j + 1)) expected = hf / 2;
        CHECK(Cd(a, j) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(fs.size());
    const Eigen::VectorXd moments = C.transpose() * ones;
    CHECK((moments.array() - 0.125).abs().maxCoeff() < 1e-13);
  }
  SUBCASE("columns are supported near their patch") {
    PolyBasis basis(p, 2);
    const SparseMatrix C = assemble_constraint_matrix(fs, basis);
    for (Index col = 0; col < C.outerSize(); ++col) {
      const Index j = col / 2;
      for (SparseMatrix::InnerIterator it(C, col); it; ++it) {
        CHECK(it.row() >= 8 * j);
        CHECK(it.row() <= 8 * (j + 1));
      }
    }
  }
  SUBCASE("interpolated patch polynomials have unit moments") {
    PolyBasis basis(p, 2);
    const SparseMatrix C = assemble_constraint_matrix(fs, basis);
    const FineSpace fine = build_fine_space(ProblemTag::Robin1d, std::nullopt, 1024);
    const SparseMatrix Cf = assemble_constraint_matrix(fine, basis);
    const Index col = basis.column(3, 1);
    const FunctionJet phi = [&](const Point& x, int, int) {
      return p->locate(x) == 3 ? basis.evaluate(3, x)(1) : 0.0;
    };
    // Discontinuous target, so the interpolant error shrinks like h_fine.
    const double coarse_err = std::abs((C.transpose() * interpolate(fs, phi))(col) - 0.125);
    const double fine_err = std::abs((Cf.transpose() * interpolate(fine, phi))(col) - 0.125);
    CHECK(fine_err < coarse_err);
    CHECK(fine_err < coarse_err / 8);
  }
  SUBCASE("non-integer refinement is rejected") {
    CHECK_THROWS_AS(assemble_constraint_matrix(build_fine_space(ProblemTag::Robin1d, std::nullopt, 60),
                                               PolyBasis(p, 1)),
                    Error);
  }
  SUBCASE("unresolved patch polynomials are rank deficient") {
    auto p8 = std::make_shared<const Partition>(2, 8);
    const FineSpace coarse = build_fine_space(ProblemTag::Plate2d, std::nullopt, 8);
    try {
      assemble_constraint_matrix(coarse, PolyBasis(p8, 2));
      FAIL("expected degenerate constraints");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateConstraints);
    }
  }
}
