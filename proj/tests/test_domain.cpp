#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "mvsde/domain.hpp"
#include "mvsde/rng.hpp"

using namespace mvsde;

TEST_CASE("interval domain projects and classifies", "[domain]") {
  const DomainSpec dom = make_interval_domain(-1.0, 2.0);
  Vector x(1);

  x << 3.5;
  REQUIRE(dom.project(x)[0] == 2.0);
  REQUIRE(dom.level(x) < 0.0);  // level is negative outside

  x << -4.0;
  REQUIRE(dom.project(x)[0] == -1.0);

  x << 0.25;
  REQUIRE(dom.project(x)[0] == 0.25);  // interior points are fixed
  REQUIRE(dom.level(x) > 0.0);  // level is positive inside
  REQUIRE(is_in_closure(dom, x));
  REQUIRE_FALSE(is_on_boundary(dom, x));

  x << 2.0;
  REQUIRE(is_on_boundary(dom, x));
  REQUIRE(is_in_closure(dom, x));
}

TEST_CASE("ball domain projects radially", "[domain]") {
  const DomainSpec dom = make_ball_domain(2, 1.0);
  Vector x(2);
  x << 3.0, 4.0;
  const Vector p = dom.project(x);
  REQUIRE(p[0] == Catch::Approx(0.6).margin(1e-15));
  REQUIRE(p[1] == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(p.norm() == Catch::Approx(1.0).margin(1e-12));

  x << 0.1, -0.2;
  REQUIRE((dom.project(x) - x).norm() == 0.0);

  // The level gradient is the unit inward normal on the boundary.
  x << 0.6, 0.8;
  const Vector g = dom.level_gradient(x);
  REQUIRE(g.dot(x) < 0.0);
  REQUIRE(g.norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("halfspace domain clamps the first coordinate", "[domain]") {
  const DomainSpec dom = make_halfspace_domain(2);
  Vector x(2);
  x << -1.5, 4.0;
  const Vector p = dom.project(x);
  REQUIRE(p[0] == 0.0);
  REQUIRE(p[1] == 4.0);

  x << 2.0, -3.0;
  REQUIRE((dom.project(x) - x).norm() == 0.0);
}

TEST_CASE("domain validation accepts the shipped domains", "[domain]") {
  for (const DomainSpec& dom :
       {make_interval_domain(-1.0, 1.0), make_ball_domain(3, 2.0),
        make_halfspace_domain(2)}) {
    const DomainValidation v = validate_domain(dom, 5.0, 200, 31);
    INFO(dom.name << ": worst_alignment=" << v.worst_alignment
                  << " worst_monotone=" << v.worst_monotone
                  << " worst_gradient_norm=" << v.worst_gradient_norm);
    REQUIRE(v.ok());
  }
}

TEST_CASE("projection is idempotent and non-expansive", "[domain]") {
  const DomainSpec dom = make_ball_domain(2, 1.5);
  for (int i = 0; i < 200; ++i) {
    Vector a(2), b(2);
    for (int k = 0; k < 2; ++k) {
      a[k] = uniform_draw(StreamKey{8, static_cast<std::uint64_t>(i), 1},
                          k, -4.0, 4.0);
      b[k] = uniform_draw(StreamKey{8, static_cast<std::uint64_t>(i), 2},
                          k, -4.0, 4.0);
    }
    const Vector pa = dom.project(a);
    const Vector pb = dom.project(b);
    REQUIRE((dom.project(pa) - pa).norm() <= 1e-14);
    REQUIRE((pa - pb).norm() <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("domain constructors validate their inputs", "[domain]") {
  REQUIRE_THROWS_AS(make_interval_domain(2.0, -1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(make_ball_domain(0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(make_ball_domain(2, -0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(make_halfspace_domain(-1), std::invalid_argument);
}
