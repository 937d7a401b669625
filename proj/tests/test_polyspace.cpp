#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "generators.hpp"
#include "opcomp/error.hpp"
#include "opcomp/polyspace.hpp"
#include "opcomp/rate.hpp"

using namespace opcomp;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sin2pi(const Point& x, int dx, int) {
  const double w = std::pow(kTwoPi, dx);
  switch (dx % 4) {
    case 0: return w * std::sin(kTwoPi * x.x());
    case 1: return w * std::cos(kTwoPi * x.x());
    case 2: return -w * std::sin(kTwoPi * x.x());
    default: return -w * std::cos(kTwoPi * x.x());
  }
}

}  // namespace

TEST_CASE("poly space dimensions") {
  CHECK(poly_space_dimension(1, 1) == 1);
  CHECK(poly_space_dimension(2, 1) == 2);
  CHECK(poly_space_dimension(2, 2) == 3);
  CHECK(poly_space_dimension(3, 2) == 6);
  CHECK_THROWS_AS(PolyBasis(std::make_shared<const Partition>(1, 4), 4), Error);
}

TEST_CASE("patch Gram matrix is |tau| times identity") {
  for (int dim : {1, 2}) {
    for (int k : {1, 2, 3}) {
      auto p = std::make_shared<const Partition>(dim, 3);
      PolyBasis basis(p, k);
      for (Index i : {Index(0), p->size() - 1}) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(basis.per_patch(), basis.per_patch());
        for_each_patch_quadrature_point(*p, i, 1, [&](const Point& x, double w) {
          const Eigen::VectorXd v = basis.evaluate(i, x);
          gram += w * v * v.transpose();
        });
        const Eigen::MatrixXd expected =
            p->patch(i).volume * Eigen::MatrixXd::Identity(basis.per_patch(), basis.per_patch());
        CHECK((gram - expected).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("k=1 projection is the patch average") {
  auto p = std::make_shared<const Partition>(1, 4);
  PolyBasis basis(p, 1);
  const auto u = [](const Point& x, int dx, int) { return dx == 0 ? x.x() * x.x() : 2 * x.x(); };
  const Eigen::MatrixXd c = project_onto_poly(u, basis);
  // phi = 1 and average of x^2 on [a, a+h] is (a^2 + a h + h^2/3)
  for (Index i = 0; i < 4; ++i) {
    const double a = 0.25 * i, h = 0.25;
    CHECK(c(i, 0) == doctest::Approx(a * a + a * h + h * h / 3).epsilon(1e-12));
  }
}

TEST_CASE("projection reproduces low-degree polynomials (property)") {
  gen::Source src(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = static_cast<int>(src.integer(1, 2));
    const int k = static_cast<int>(src.integer(1, 3));
    const double c0 = src.uniform(-1, 1), cx = src.uniform(-1, 1), cy = src.uniform(-1, 1);
    const double cxx = k == 3 ? src.uniform(-1, 1) : 0.0;
    const double lin = k >= 2 ? 1.0 : 0.0;
    const FunctionJet u = [=](const Point& x, int dx, int dy) {
      const double yy = dim == 2 ? x.y() : 0.0;
      if (dx == 0 && dy == 0) return c0 + lin * (cx * x.x() + cy * yy) + cxx * x.x() * x.x();
      if (dx == 1 && dy == 0) return lin * cx + 2 * cxx * x.x();
      if (dx == 0 && dy == 1) return dim == 2 ? lin * cy : 0.0;
      if (dx == 2 && dy == 0) return 2 * cxx;
      return 0.0;
    };
    auto p = std::make_shared<const Partition>(dim, src.integer(1, 6));
    PolyBasis basis(p, k);
    const Eigen::MatrixXd coeffs = project_onto_poly(u, basis, 1);
    CHECK(projection_error_squared(u, basis, coeffs, 0, 1) < 1e-20);
  }
}

TEST_CASE("projection error rates for sin(2 pi x)") {
  const std::vector<Index> levels{8, 16, 32, 64};
  for (auto [k, p] : {std::pair{1, 0}, std::pair{2, 0}, std::pair{2, 1}}) {
    const auto r = projection_error_rate(k, p, sin2pi, levels);
    CAPTURE(k);
    CAPTURE(p);
    CHECK(std::abs(r.fit.slope - (k - p)) < 0.2);
  }
  CHECK_THROWS_AS(projection_error_rate(2, 2, sin2pi, levels), Error);
  CHECK_THROWS_AS(projection_error_rate(1, 0, sin2pi, {8, 16}), Error);
}

TEST_CASE("rate fit") {
  SUBCASE("exact power law") {
    const auto f = rate_fit<double>({{0.5, 0.25}, {0.25, 0.0625}, {0.125, 0.015625}});
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(f.r_squared == doctest::Approx(1.0));
  }
  SUBCASE("constant data has slope 0") {
    const auto f = rate_fit<double>({{0.5, 3.0}, {0.25, 3.0}, {0.125, 3.0}});
    CHECK(std::abs(f.slope) < 1e-14);
  }
  SUBCASE("noisy power law") {
    gen::Source src(17);
    std::vector<std::pair<double, double>> pts;
    for (double h = 0.5; h > 1e-3; h /= 2) pts.emplace_back(h, 3 * std::pow(h, 1.5) * (1 + 0.01 * src.uniform(-1, 1)));
    const auto f = rate_fit<double>(pts);
    CHECK(f.slope > 1.4);
    CHECK(f.slope < 1.6);
  }
  SUBCASE("invalid input") {
    CHECK_THROWS_AS(rate_fit<double>({{0.5, 1.0}, {0.25, 0.0}, {0.1, 1.0}}), Error);
    CHECK_THROWS_AS(rate_fit<double>({{0.5, 1.0}, {0.25, 1.0}}), Error);
  }
}
