#include <doctest.h>

#include <cmath>
#include <memory>

#include "generators.hpp"
#include "opcomp/error.hpp"
#include "opcomp/mesh.hpp"

using namespace opcomp;

TEST_CASE("uniform partitions") {
  SUBCASE("1D sizes and volumes") {
    Partition p(1, 8);
    CHECK(p.size() == 8);
    CHECK(p.h() == doctest::Approx(0.125));
    CHECK(p.delta() == 1.0);
    double total = 0;
    for (const auto& patch : p.patches()) total += patch.volume;
    CHECK(total == doctest::Approx(1.0));
  }
  SUBCASE("2D ordering is x fastest") {
    Partition p(2, 4);
    CHECK(p.size() == 16);
    CHECK(p.patch(5).lower.isApprox(Point(0.25, 0.25)));
    CHECK(p.patch_index(3, 1) == 7);
    CHECK(p.delta() == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(Partition(3, 4), Error);
    CHECK_THROWS_AS(Partition(1, 0), Error);
  }
}

TEST_CASE("locate returns the containing patch") {
  gen::Source src(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = static_cast<int>(src.integer(1, 2));
    const Index m = src.integer(1, 33);
    Partition p(dim, m);
    const Point x(src.uniform(0, 1), dim == 2 ? src.uniform(0, 1) : 0.0);
    const Patch& patch = p.patch(p.locate(x));
    CHECK(distance_to_box(x, patch.lower, patch.upper, dim) == 0.0);
  }
}

TEST_CASE("oversampling regions") {
  auto p = std::make_shared<const Partition>(1, 64);
  const double h = p->h();

  SUBCASE("radius 2.5h around patch 32 covers patches 30..34") {
    const PatchSet s = oversampling_region(p, 32, 2.5 * h);
    REQUIRE(s.size() == 5);
    CHECK(s.members.front() == 30);
    CHECK(s.members.back() == 34);
  }
  SUBCASE("radius beyond the diameter covers everything") {
    CHECK(oversampling_region(p, 3, 2.0).size() == 64);
  }
  SUBCASE("small radius keeps only the centre patch") {
    const PatchSet s = oversampling_region(p, 10, 0.25 * h);
    CHECK(s.size() == 1);
    CHECK(s.contains(10));
  }
  SUBCASE("nonpositive radius is rejected") {
    CHECK_THROWS_AS(oversampling_region(p, 10, 0.0), Error);
  }
}

TEST_CASE("oversampling regions are nested and contain the centre (property)") {
  gen::Source src(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = static_cast<int>(src.integer(1, 2));
    auto p = std::make_shared<const Partition>(dim, src.integer(2, 16));
    const Index i = src.integer(0, p->size() - 1);
    const double r1 = src.uniform(0.01, 1.0), r2 = r1 + src.uniform(0.0, 0.5);
    const PatchSet a = oversampling_region(p, i, r1), b = oversampling_region(p, i, r2);
    CHECK(a.contains(i));
    for (Index member : a.members) CHECK(b.contains(member));
  }
}

TEST_CASE("radius schedules") {
  CHECK(radius_from_schedule(0.25, 3, RadiusSchedule::Linear) == doctest::Approx(0.75));
  CHECK(radius_from_schedule(0.25, 2, RadiusSchedule::Log2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(radius_from_schedule(1.0, 2.4, RadiusSchedule::Log2), Error);
}
