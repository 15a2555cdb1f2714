#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "mvsde/audit.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/models.hpp"

using namespace mvsde;

namespace {

const AuditEntry& entry_named(const AuditReport& rep, const std::string& n) {
  for (const auto& e : rep.entries) {
    if (e.name == n) return e;
  }
  FAIL("no audit entry named " << n);
  static AuditEntry dummy;
  return dummy;
}

// Drift x, identity diffusion: every forward constant is attained exactly.
CoefficientSet linear_unit_set(double slope, double declared_growth) {
  CoefficientSet c;
  c.name = "linear-unit";
  c.state_dim = 1;
  c.value_dim = 1;
  c.time_constant = true;
  c.drift = [slope](double, const Vector& x) { return Vector(slope * x); };
  c.diffusion = [](double, const Vector&) {
    return Matrix(Matrix::Identity(1, 1));
  };
  c.driver = [](double, const Vector& x, const Vector& y) {
    return Vector(x - y);
  };
  c.boundary_driver = [](double, const Vector&, const Vector& y) {
    return Vector(-0.2 * y);
  };
  c.terminal = [](const Vector& x) { return x; };
  c.growth_forward = declared_growth;
  c.growth_driver = 2.0;
  c.growth_boundary = 0.04;
  c.ellipticity = 1.0;
  return c;
}

}  // namespace

TEST_CASE("well-declared model with free potentials audits clean", "[audit]") {
  const CoefficientSet c = make_coefficient_model("constant_linear_1d", {});
  const PotentialPair pots = make_potential_pair("free", 1);
  const AuditReport rep =
      audit_assumptions(c, pots.phi, pots.psi, 2000, 7);

  REQUIRE(rep.ok());
  REQUIRE(rep.violations() == 0);

  // Zero potentials have identically zero Yosida gradients: the mixed sign
  // inner product is exactly zero at every sample.
  REQUIRE(entry_named(rep, "mixed_gradient_sign").observed == 0.0);
  REQUIRE(entry_named(rep, "zero_interior").satisfied);
  REQUIRE(entry_named(rep, "potential_normalized").satisfied);

  // sigma = 1: the ellipticity estimate is exactly the declared level.
  REQUIRE(rep.iota_hat == 1.0);
  REQUIRE(entry_named(rep, "ellipticity").satisfied);

  const std::string s = rep.summary();
  REQUIRE(s.find("[ok]") != std::string::npos);
  REQUIRE(s.find("VIOLATED") == std::string::npos);
  REQUIRE(s.find("estimated constants") != std::string::npos);
  REQUIRE(s.find("violations=0") != std::string::npos);
}

TEST_CASE("linear drift attains its declared constants exactly", "[audit]") {
  // b(x) = x with constant sigma: the Lipschitz ratio is exactly 1 at every
  // sample pair, so the estimate equals the declared constant.
  const CoefficientSet c = linear_unit_set(1.0, 1.0);
  const PotentialPair pots = make_potential_pair("free", 1);
  const AuditReport rep = audit_assumptions(c, pots.phi, pots.psi, 1000, 3);

  REQUIRE(rep.l1_hat == 1.0);
  REQUIRE(entry_named(rep, "forward_lipschitz").observed == 1.0);
  REQUIRE(entry_named(rep, "forward_lipschitz").satisfied);
  REQUIRE(entry_named(rep, "diffusion_bound").observed == 1.0);
  REQUIRE(rep.ok());
}

TEST_CASE("under-declared growth constant is reported, not thrown",
          "[audit]") {
  // b(x) = 2x declared with constant 1: the sampled ratio 4 exceeds it.
  const CoefficientSet c = linear_unit_set(2.0, 1.0);
  const PotentialPair pots = make_potential_pair("free", 1);
  const AuditReport rep = audit_assumptions(c, pots.phi, pots.psi, 1000, 3);

  const AuditEntry& e = entry_named(rep, "forward_lipschitz");
  REQUIRE_FALSE(e.satisfied);
  REQUIRE(e.observed == 4.0);
  REQUIRE(e.declared == 1.0);
  REQUIRE_FALSE(rep.ok());
  REQUIRE(rep.violations() >= 1);
  REQUIRE(rep.l1_hat == 4.0);
  REQUIRE(rep.summary().find("VIOLATED") != std::string::npos);
}

TEST_CASE("over-declared ellipticity is flagged", "[audit]") {
  CoefficientSet c = linear_unit_set(1.0, 1.0);
  c.ellipticity = 2.0;  // sigma = 1 only attains 1
  const PotentialPair pots = make_potential_pair("free", 1);
  const AuditReport rep = audit_assumptions(c, pots.phi, pots.psi, 500, 11);
  const AuditEntry& e = entry_named(rep, "ellipticity");
  REQUIRE_FALSE(e.satisfied);
  REQUIRE(e.observed == 1.0);
  REQUIRE_FALSE(rep.ok());
}

TEST_CASE("barrier pinned at the origin fails interiority; its softening "
          "does not",
          "[audit]") {
  const CoefficientSet c = make_coefficient_model("constant_linear_1d", {});

  const PotentialPair hard = make_potential_pair("positive-y", 1);
  const AuditReport rh = audit_assumptions(c, hard.phi, hard.psi, 500, 5);
  REQUIRE_FALSE(entry_named(rh, "zero_interior").satisfied);
  REQUIRE_FALSE(rh.ok());

  const PotentialPair soft = make_potential_pair("soft-positive", 1);
  const AuditReport rs = audit_assumptions(c, soft.phi, soft.psi, 500, 5);
  REQUIRE(entry_named(rs, "zero_interior").satisfied);
  REQUIRE(entry_named(rs, "potential_normalized").satisfied);
  REQUIRE(entry_named(rs, "mixed_gradient_sign").satisfied);
}

TEST_CASE("every shipped pair passes the sign and normalization probes",
          "[audit]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  for (const auto& pair : compatible_potential_pairs(1)) {
    INFO("potential pair: " << pair.name);
    const AuditReport rep = audit_assumptions(c, pair.phi, pair.psi, 400, 13);
    REQUIRE(entry_named(rep, "mixed_gradient_sign").satisfied);
    REQUIRE(entry_named(rep, "potential_normalized").satisfied);
    // The gamma-uniform compatibility ratios must admit a finite constant.
    REQUIRE(entry_named(rep, "mixed_phi_g").satisfied);
    REQUIRE(entry_named(rep, "mixed_psi_f").satisfied);
    REQUIRE(std::isfinite(rep.l2_hat));
  }
}

TEST_CASE("audit sampling is deterministic in the seed", "[audit]") {
  const CoefficientSet c = make_coefficient_model("periodic_linear_1d", {});
  const PotentialPair pots = make_potential_pair("soft-positive", 1);
  const AuditReport a = audit_assumptions(c, pots.phi, pots.psi, 300, 17);
  const AuditReport b = audit_assumptions(c, pots.phi, pots.psi, 300, 17);
  REQUIRE(a.summary() == b.summary());

  const AuditReport d = audit_assumptions(c, pots.phi, pots.psi, 300, 18);
  REQUIRE(a.summary() != d.summary());  // different probe set
}

TEST_CASE("domain-aware sampling stays inside the closure", "[audit]") {
  // With the interval domain attached, state samples are projected into
  // [-1, 1]: a drift that is huge outside cannot inflate the growth ratio.
  CoefficientSet c = linear_unit_set(1.0, 1.0);
  c.drift = [](double, const Vector& x) {
    Vector b = x;
    if (x[0] * x[0] > 1.0) b *= 100.0;
    return b;
  };
  const DomainSpec dom = make_interval_domain(-1.0, 1.0);
  AuditOptions opt;
  opt.domain = &dom;
  const PotentialPair pots = make_potential_pair("free", 1);
  const AuditReport rep =
      audit_assumptions(c, pots.phi, pots.psi, 1000, 23, opt);
  REQUIRE(entry_named(rep, "drift_growth").observed <= 1.0);

  // Dimension mismatches and empty budgets are caller errors.
  const DomainSpec dom2 = make_ball_domain(2, 1.0);
  AuditOptions bad;
  bad.domain = &dom2;
  REQUIRE_THROWS_AS(audit_assumptions(c, pots.phi, pots.psi, 100, 1, bad),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(audit_assumptions(c, pots.phi, pots.psi, 0, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      audit_assumptions(c, ConvexPotential::zero(3), pots.psi, 100, 1),
      std::invalid_argument);
}
