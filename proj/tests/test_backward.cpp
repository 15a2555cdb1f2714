#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "mvsde/audit.hpp"
#include "mvsde/backward.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/forward.hpp"
#include "mvsde/models.hpp"

using namespace mvsde;

namespace {

// Noise-free set: constant paths, driver f = -y, terminal phi-of-x = 1.
CoefficientSet frozen_decay_set() {
  CoefficientSet c;
  c.name = "frozen-decay";
  c.state_dim = 1;
  c.value_dim = 1;
  c.time_constant = true;
  c.drift = [](double, const Vector&) { return Vector(Vector::Zero(1)); };
  c.diffusion = [](double, const Vector&) {
    return Matrix(Matrix::Zero(1, 1));
  };
  c.driver = [](double, const Vector&, const Vector& y) { return Vector(-y); };
  c.boundary_driver = [](double, const Vector&, const Vector&) {
    return Vector(Vector::Zero(1));
  };
  c.terminal = [](const Vector&) { return Vector(Vector::Ones(1)); };
  c.ellipticity = 1e-300;  // declared floor; never exercised here
  return c;
}

CoefficientSet unit_noise_decay_set() {
  CoefficientSet c = frozen_decay_set();
  c.name = "unit-noise-decay";
  c.diffusion = [](double, const Vector&) {
    return Matrix(Matrix::Identity(1, 1));
  };
  c.ellipticity = 1.0;
  return c;
}

}  // namespace

TEST_CASE("noise-free linear driver reproduces the discrete exponential",
          "[backward]") {
  const CoefficientSet c = frozen_decay_set();
  const DomainSpec dom = make_interval_domain(-10.0, 10.0);
  const TimeGrid grid(0.0, 1.0, 1000);
  Vector x0(1);
  x0 << 0.5;
  const PathEnsemble ens = simulate(dom, c, 1.0, grid, x0, 50, 0);
  const PotentialPair pots = make_potential_pair("free", 1);

  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  const double dt = grid.dt();
  double y = 1.0;
  for (int i = 0; i < 1000; ++i) y = y + dt * (-y);
  REQUIRE(sol.start_value[0] == Catch::Approx(y).margin(1e-11));
  REQUIRE(std::abs(sol.start_value[0] - std::exp(-1.0)) <= 2e-3);
  REQUIRE(sol.resolvent_exact);
}

TEST_CASE("constant terminal under noise stays on the same recursion",
          "[backward]") {
  // The terminal value is constant, so the exact solution ignores the noise;
  // the regression must recover a constant continuation at every step.
  const CoefficientSet c = unit_noise_decay_set();
  const DomainSpec dom = make_ball_domain(1, 100.0);
  const TimeGrid grid(0.0, 1.0, 1000);
  Vector x0(1);
  x0 << 0.0;
  const PathEnsemble ens = simulate(dom, c, 1.0, grid, x0, 1000, 31);
  const PotentialPair pots = make_potential_pair("free", 1);

  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  const double dt = grid.dt();
  double y = 1.0;
  for (int i = 0; i < 1000; ++i) y = y + dt * (-y);
  REQUIRE(sol.start_value[0] == Catch::Approx(y).margin(1e-6));
  REQUIRE(std::abs(sol.start_value[0] - std::exp(-1.0)) <= 5e-3);
  REQUIRE_FALSE(martingale_check(sol).flagged);
}

TEST_CASE("three-step hand recursion is reproduced exactly", "[backward]") {
  // Constant paths at 0.25, f = -1, terminal x - 0.5, lower barrier at 0:
  // every quantity is a dyadic rational, so the sweep must match the hand
  // recursion bitwise.  Y_3 = -0.25; each step v = Y_{i+1} - 0.25 is clipped
  // to 0 by the barrier.
  CoefficientSet c = frozen_decay_set();
  c.driver = [](double, const Vector&, const Vector&) {
    Vector f(1);
    f[0] = -1.0;
    return f;
  };
  c.terminal = [](const Vector& x) {
    Vector v(1);
    v[0] = x[0] - 0.5;
    return v;
  };
  const DomainSpec dom = make_interval_domain(0.0, 1.0);
  const TimeGrid grid(0.0, 0.75, 3);
  Vector x0(1);
  x0 << 0.25;
  const PathEnsemble ens = simulate(dom, c, 1.0, grid, x0, 8, 0);
  const PotentialPair pots = make_potential_pair("positive-y", 1);

  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  for (int p = 0; p < 8; ++p) {
    REQUIRE(sol.value(p, 3)[0] == -0.25);
    REQUIRE(sol.value(p, 2)[0] == 0.0);
    REQUIRE(sol.value(p, 1)[0] == 0.0);
    REQUIRE(sol.value(p, 0)[0] == 0.0);
    REQUIRE(sol.du_at(p, 2)[0] == -0.5);   // v = -0.25 - 0.25, clipped at 0
    REQUIRE(sol.du_at(p, 1)[0] == -0.25);  // v = 0 - 0.25
    REQUIRE(sol.du_at(p, 0)[0] == -0.25);
    REQUIRE(sol.dv_at(p, 2)[0] == 0.0);
    REQUIRE(sol.dv_at(p, 1)[0] == 0.0);
    REQUIRE(sol.dv_at(p, 0)[0] == 0.0);
  }
  REQUIRE(sol.start_value[0] == 0.0);
  REQUIRE(sol.resolvent_exact);
}

TEST_CASE("solver output satisfies the discrete variational inequality",
          "[backward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.3, 30);
  Vector x0(1);
  x0 << 0.1;
  const PathEnsemble ens = simulate(dom, c, 0.1, grid, x0, 500, 17);
  const PotentialPair pots = make_potential_pair("positive-y", 1);

  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  const double dt = grid.dt();
  for (int p = 0; p < 500; p += 13) {
    for (int i = 0; i < 30; ++i) {
      const double y = sol.value(p, i)[0];
      const double du = sol.du_at(p, i)[0];
      REQUIRE(y >= -1e-12);  // barrier keeps Y in the admissible set
      // du/dt must be a subgradient of the indicator at y.
      for (double z : {0.0, 0.5, 2.0}) {
        REQUIRE(du * (z - y) <= 1e-9);
      }
      REQUIRE(sol.dv_at(p, i)[0] == 0.0);  // second potential is zero here
    }
  }
  REQUIRE(sol.moments.sup_square >= 0.0);
  REQUIRE(sol.moments.drift_energy >= 0.0);
  REQUIRE(sol.resolvent_exact);
}

TEST_CASE("zero potentials leave both correction processes at zero",
          "[backward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.3, 30);
  Vector x0(1);
  x0 << 0.1;
  const PathEnsemble ens = simulate(dom, c, 0.1, grid, x0, 200, 19);
  const PotentialPair pots = make_potential_pair("free", 1);

  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  for (double v : sol.du) REQUIRE(v == 0.0);
  for (double v : sol.dv) REQUIRE(v == 0.0);
  REQUIRE(sol.moments.drift_energy == 0.0);
  REQUIRE(sol.moments.boundary_energy == 0.0);

  // Terminal slices are the raw terminal evaluations, bitwise.
  for (int p = 0; p < 200; p += 37) {
    REQUIRE(sol.value(p, 30)[0] == c.terminal(ens.state(p, 30))[0]);
  }
}

TEST_CASE("gain estimate tracks the discrete discount factor", "[backward]") {
  // b = 0, sigma = 1, terminal x, f = -y: Y_i = X_i (1-dt)^{n-i}, so the
  // average gain at step i is close to exp(-(T - t_i)).
  CoefficientSet c = unit_noise_decay_set();
  c.terminal = [](const Vector& x) { return x; };
  const DomainSpec dom = make_ball_domain(1, 100.0);
  const int n = 100;
  const TimeGrid grid(0.0, 1.0, n);
  Vector x0(1);
  x0 << 0.0;
  const PathEnsemble ens = simulate(dom, c, 1.0, grid, x0, 8000, 23, true);
  const PotentialPair pots = make_potential_pair("free", 1);

  const BackwardSolution sol = solve(ens, c, pots.phi, pots.psi,
                                     RegressionConfig{}, DriverMode::epsilon,
                                     nullptr, /*estimate_gain=*/true);
  REQUIRE(sol.gain.size() == static_cast<std::size_t>(n));

  auto band_mean = [&](int lo, int hi) {
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) acc += sol.gain[i](0, 0);
    return acc / (hi - lo);
  };
  const double mid = band_mean(40, 60);
  REQUIRE(std::abs(mid - std::exp(-0.5)) <= 0.08);
  const double early = band_mean(5, 25);
  const double late = band_mean(75, 95);
  REQUIRE(early < late);  // discount decays with time to maturity
  REQUIRE(std::abs(early - std::exp(-0.85)) <= 0.12);
  REQUIRE(std::abs(late - std::exp(-0.15)) <= 0.12);

  REQUIRE(martingale_check(sol).statistic <= 6.0);
}

TEST_CASE("start value uncertainty is reported from path observations",
          "[backward]") {
  CoefficientSet c = unit_noise_decay_set();
  c.terminal = [](const Vector& x) { return x; };
  const DomainSpec dom = make_ball_domain(1, 100.0);
  const TimeGrid grid(0.0, 1.0, 50);
  Vector x0(1);
  x0 << 0.0;
  const PathEnsemble ens = simulate(dom, c, 1.0, grid, x0, 2000, 29);
  const PotentialPair pots = make_potential_pair("free", 1);
  const BackwardSolution sol =
      solve(ens, c, pots.phi, pots.psi, RegressionConfig{}, DriverMode::epsilon);

  // Y_start estimates E[X_T] e^{-1} = 0.
  REQUIRE(std::abs(sol.start_value[0]) <= 0.05);
  // The reported stderr comes from per-path pre-resolvent observations: it
  // must be a nontrivial spread, far above the collapsed post-resolvent one.
  REQUIRE(sol.start_stderr[0] > 1e-4);
  REQUIRE(sol.start_stderr[0] < 1e-2);
}

TEST_CASE("backward solve rejects inconsistent inputs", "[backward]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.1, 10);
  Vector x0(1);
  x0 << 0.1;
  const PathEnsemble ens = simulate(dom, c, 0.1, grid, x0, 20, 1);
  const PathEnsemble bare = simulate(dom, c, 0.1, grid, x0, 20, 1, false);
  const PotentialPair pots = make_potential_pair("free", 1);

  // Potential dimension mismatch.
  REQUIRE_THROWS_AS(solve(ens, c, ConvexPotential::zero(2), pots.psi,
                          RegressionConfig{}, DriverMode::epsilon),
                    std::invalid_argument);
  // Averaged mode needs the averaged coefficients.
  REQUIRE_THROWS_AS(solve(ens, c, pots.phi, pots.psi, RegressionConfig{},
                          DriverMode::averaged, nullptr),
                    std::invalid_argument);
  // Gain estimation needs retained increments.
  REQUIRE_THROWS_AS(solve(bare, c, pots.phi, pots.psi, RegressionConfig{},
                          DriverMode::epsilon, nullptr, true),
                    std::invalid_argument);
  // Degenerate regression settings.
  REQUIRE_THROWS_AS(validate(RegressionConfig{7, 1e-10, true}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(validate(RegressionConfig{2, -1.0, true}),
                    std::invalid_argument);
}
