#include <cmath>
#include <cstdio>
#include <numbers>

#include <catch2/catch_amalgamated.hpp>

#include "mvsde/coefficients.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/forward.hpp"
#include "mvsde/models.hpp"

using namespace mvsde;

namespace {

// Drift-free unit-diffusion set on `dim` coordinates.
CoefficientSet brownian_set(int dim) {
  CoefficientSet c;
  c.name = "brownian";
  c.state_dim = dim;
  c.value_dim = 1;
  c.time_constant = true;
  c.drift = [dim](double, const Vector&) { return Vector(Vector::Zero(dim)); };
  c.diffusion = [dim](double, const Vector&) {
    return Matrix(Matrix::Identity(dim, dim));
  };
  c.driver = [](double, const Vector&, const Vector& y) { return y; };
  c.boundary_driver = [](double, const Vector&, const Vector& y) { return y; };
  c.terminal = [](const Vector& x) { return x; };
  c.ellipticity = 1.0;
  return c;
}

}  // namespace

TEST_CASE("step rule resolves the fast period and caps the step",
          "[forward]") {
  GridRule rule;
  const double period = 2.0 * kPi;

  // epsilon small: dt = 0.01 * 2pi / 64 = 9.8175e-4 < cap, 1019 steps on [0,1].
  TimeGrid g = rule.make(0.0, 1.0, 0.01, period);
  REQUIRE(g.n_steps == 1019);
  REQUIRE(g.dt() == Catch::Approx(1.0 / 1019).margin(1e-15));

  // epsilon = 1: the 1e-3 cap binds, exactly 1000 steps.
  g = rule.make(0.0, 1.0, 1.0, period);
  REQUIRE(g.n_steps == 1000);

  // No epsilon (averaged system): cap only.
  g = rule.make(0.0, 1.0, std::nullopt, period);
  REQUIRE(g.n_steps == 1000);

  // Explicit step count wins over everything.
  GridRule fixed;
  fixed.n_steps = 500;
  REQUIRE(fixed.make(0.0, 1.0, 0.01, period).n_steps == 500);

  // A span that is an exact multiple of the fast step stays phase-locked.
  g = rule.make(0.0, 2.0 * kPi / 5.0, 0.01, period);
  REQUIRE(g.n_steps == 1280);  // 20 periods, 64 steps each
}

TEST_CASE("coefficients are read at the accelerated left endpoint",
          "[forward]") {
  // b(s, x) = s with negligible noise: X_T is the left Riemann sum of
  // s/epsilon over the grid.
  CoefficientSet c = brownian_set(1);
  c.time_constant = false;
  c.period = 2.0 * kPi * 1e6;  // effectively aperiodic over [0, 1]
  c.drift = [](double s, const Vector&) {
    Vector b(1);
    b[0] = s;
    return b;
  };
  c.diffusion = [](double, const Vector&) {
    Matrix sg(1, 1);
    sg(0, 0) = 1e-9;
    return sg;
  };
  c.ellipticity = 1e-18;

  const DomainSpec dom = make_interval_domain(-10.0, 10.0);
  const TimeGrid grid(0.0, 1.0, 4);
  Vector x0(1);
  x0 << 0.0;
  const double eps = 0.5;
  const PathEnsemble e = simulate(dom, c, eps, grid, x0, 1, 11);
  // Left sum: (0 + 0.25 + 0.5 + 0.75) * 0.25 / 0.5 = 0.75.
  REQUIRE(e.state(0, 4)[0] == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("interior motion never reflects", "[forward]") {
  const CoefficientSet c = make_coefficient_model("constant_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-10.0, 10.0);
  const TimeGrid grid(0.0, 1.0, 100);
  Vector x0(1);
  x0 << 0.0;
  const PathEnsemble e = simulate(dom, c, 1.0, grid, x0, 200, 3);

  for (int p = 0; p < e.n_paths; ++p) {
    REQUIRE(e.variation_at(p, grid.n_steps) == 0.0);
  }
  Vector anchor(1);
  anchor << 0.0;
  const PathDiagnostics d = path_diagnostics(e, dom, anchor);
  REQUIRE(d.reflection_fraction == 0.0);
  REQUIRE(d.mean_variation == 0.0);
  REQUIRE(d.monotonicity_min == 0.0);
}

TEST_CASE("reflected Brownian motion matches the half-normal law",
          "[forward]") {
  // On the half-line with b = 0, sigma = 1, x0 = 0: |X_T| has mean
  // sqrt(2T/pi).  The projection scheme carries an O(sqrt(dt)) outward bias
  // covered by the additive allowance.
  const CoefficientSet c = brownian_set(1);
  const DomainSpec dom = make_halfspace_domain(1);
  const TimeGrid grid(0.0, 1.0, 1000);
  Vector x0(1);
  x0 << 0.0;
  const int n_paths = 20000;
  const PathEnsemble e = simulate(dom, c, 1.0, grid, x0, n_paths, 2718, false);

  std::vector<double> absx(n_paths);
  for (int p = 0; p < n_paths; ++p) absx[p] = std::abs(e.state(p, 1000)[0]);
  const auto [mean, se] = mean_stderr(absx);
  const double target = std::sqrt(2.0 / kPi);
  REQUIRE(std::abs(mean - target) <= 3.0 * se + 0.02);

  // Reflection accounting: |K| increments appear exactly at the steps whose
  // landing point is on the boundary, and nowhere else.
  for (int p = 0; p < 200; ++p) {
    for (int i = 0; i < grid.n_steps; ++i) {
      const double dv = e.dvariation(p, i);
      REQUIRE(dv >= 0.0);
      if (dv > 0.0) {
        REQUIRE(is_on_boundary(dom, e.state(p, i + 1)));
      } else {
        REQUIRE(e.reflection(p, i).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }

  Vector anchor(1);
  anchor << 0.5;
  const PathDiagnostics d = path_diagnostics(e, dom, anchor);
  REQUIRE(d.monotonicity_min >= -1e-12);
  REQUIRE(d.reflection_fraction > 0.0);
  REQUIRE(d.worst_boundary_level <= 1e-12);
}

TEST_CASE("half-space reflections point along the inward normal",
          "[forward]") {
  const CoefficientSet c = brownian_set(2);
  const DomainSpec dom = make_halfspace_domain(2);
  const TimeGrid grid(0.0, 1.0, 200);
  Vector x0(2);
  x0 << 0.0, 0.0;
  const PathEnsemble e = simulate(dom, c, 1.0, grid, x0, 300, 5);

  bool saw_reflection = false;
  for (int p = 0; p < e.n_paths; ++p) {
    for (int i = 0; i < grid.n_steps; ++i) {
      const Vector dk = e.reflection(p, i);
      if (dk.cwiseAbs().maxCoeff() == 0.0) continue;
      saw_reflection = true;
      REQUIRE(dk[1] == 0.0);   // tangential component untouched
      REQUIRE(dk[0] > 0.0);    // pushed back inward
    }
  }
  REQUIRE(saw_reflection);
}

TEST_CASE("simulation is bitwise deterministic in the seed", "[forward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.5, 50);
  Vector x0(1);
  x0 << 0.1;

  const PathEnsemble a = simulate(dom, c, 0.1, grid, x0, 64, 99);
  const PathEnsemble b = simulate(dom, c, 0.1, grid, x0, 64, 99);
  REQUIRE(a.states == b.states);
  REQUIRE(a.reflections == b.reflections);
  REQUIRE(a.variation == b.variation);
  REQUIRE(a.increments == b.increments);

  const PathEnsemble d = simulate(dom, c, 0.1, grid, x0, 64, 100);
  REQUIRE(a.states != d.states);
}

TEST_CASE("dropping increments does not change the trajectories",
          "[forward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.5, 50);
  Vector x0(1);
  x0 << 0.1;

  const PathEnsemble keep = simulate(dom, c, 0.1, grid, x0, 32, 7, true);
  const PathEnsemble drop = simulate(dom, c, 0.1, grid, x0, 32, 7, false);
  REQUIRE(keep.has_increments());
  REQUIRE_FALSE(drop.has_increments());
  REQUIRE(keep.states == drop.states);
  REQUIRE(keep.variation == drop.variation);
}

TEST_CASE("path dumps round-trip bitwise", "[forward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.25, 0.75, 40);
  Vector x0(1);
  x0 << -0.3;
  const PathEnsemble e = simulate(dom, c, 0.1, grid, x0, 16, 13);

  const std::string path = "forward_dump_test.bin";
  write_path_dump(e, path);
  const PathEnsemble r = read_path_dump(path, 0.25);
  std::remove(path.c_str());

  REQUIRE(r.dim == e.dim);
  REQUIRE(r.n_paths == e.n_paths);
  REQUIRE(r.grid.n_steps == e.grid.n_steps);
  REQUIRE(r.grid.t_start == 0.25);
  REQUIRE(r.grid.dt() == Catch::Approx(e.grid.dt()).margin(1e-15));
  REQUIRE(r.states == e.states);
  REQUIRE(r.reflections == e.reflections);
  REQUIRE(r.variation == e.variation);
  REQUIRE_FALSE(r.epsilon.has_value());

  REQUIRE_THROWS_AS(read_path_dump("no_such_dump_file.bin"),
                    std::invalid_argument);
}

TEST_CASE("exploding coefficients raise a numerical failure", "[forward]") {
  CoefficientSet c = brownian_set(1);
  c.drift = [](double, const Vector& x) { return Vector(1e8 * x); };
  const DomainSpec dom = make_halfspace_domain(1);
  const TimeGrid grid(0.0, 10.0, 100);
  Vector x0(1);
  x0 << 1.0;
  REQUIRE_THROWS_MATCHES(simulate(dom, c, 1.0, grid, x0, 2, 1),
                         numerical_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("non-finite")));
}

TEST_CASE("weak gap vanishes on identical ensembles", "[forward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.5, 50);
  Vector x0(1);
  x0 << 0.1;
  const PathEnsemble e = simulate(dom, c, 0.1, grid, x0, 100, 21);

  const std::vector<TestFunctional> fs = {
      make_functional("x"), make_functional("x2"), make_functional("cos")};
  const auto gaps = weak_gap(e, e, fs);
  REQUIRE(gaps.size() == 3);
  for (const auto& g : gaps) {
    REQUIRE(g.gap == 0.0);
    REQUIRE(g.paired_stderr == 0.0);
    REQUIRE(g.pooled_stderr > 0.0);
  }

  REQUIRE_THROWS_AS(make_functional("nope"), std::invalid_argument);
}

TEST_CASE("simulation rejects inconsistent inputs", "[forward]") {
  const CoefficientSet c = brownian_set(2);
  const DomainSpec dom = make_halfspace_domain(1);
  const TimeGrid grid(0.0, 1.0, 10);
  Vector x0(1);
  x0 << 0.5;
  // Dimension mismatch between coefficients and domain.
  REQUIRE_THROWS_AS(simulate(dom, c, 1.0, grid, x0, 1, 0),
                    std::invalid_argument);

  const CoefficientSet c1 = brownian_set(1);
  Vector outside(1);
  outside << -2.0;
  REQUIRE_THROWS_AS(simulate(dom, c1, 1.0, grid, outside, 1, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(simulate(dom, c1, -1.0, grid, x0, 1, 0),
                    std::invalid_argument);
}
