#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/potential.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// Sampling boxes and resolvent scales for the assumption audit.  When a
// domain is supplied, state samples are projected into its closure and
// boundary-only inequalities use genuine boundary points (projections of far
// exterior points); without a domain the raw box samples are used as-is.
struct AuditOptions {
  double x_radius = 2.0;
  double y_radius = 2.0;
  double time_horizon = 50.0;
  std::vector<double> gammas = {1e-3, 1e-2, 1e-1, 1.0};
  const DomainSpec* domain = nullptr;
};

// One audited inequality.  For upper bounds `observed` is the worst sampled
// ratio (the smallest admissible constant); for lower bounds / sign
// conditions it is the worst sampled margin.  `declared` is NaN when the
// model declares no constant for the inequality.
struct AuditEntry {
  std::string name;
  std::string inequality;
  double observed = 0.0;
  double declared = kNaN;
  bool satisfied = true;
  long samples = 0;
};

struct AuditReport {
  std::vector<AuditEntry> entries;
  double l1_hat = 0.0;    // forward growth/Lipschitz estimate
  double l2_hat = 0.0;    // potential/driver compatibility estimate
  double l3_hat = 0.0;    // driver estimate
  double l4_hat = 0.0;    // boundary driver estimate
  double iota_hat = kInf; // ellipticity estimate

  int violations() const {
    int n = 0;
    for (const auto& e : entries) n += e.satisfied ? 0 : 1;
    return n;
  }
  bool ok() const { return violations() == 0; }

  std::string summary() const {
    std::string s;
    for (const auto& e : entries) {
      char buf[256];
      if (std::isnan(e.declared)) {
        std::snprintf(buf, sizeof buf, "[%s] %-24s observed=%.6g (%s)\n",
                      e.satisfied ? "ok" : "VIOLATED", e.name.c_str(),
                      e.observed, e.inequality.c_str());
      } else {
        std::snprintf(buf, sizeof buf,
                      "[%s] %-24s observed=%.6g declared=%.6g (%s)\n",
                      e.satisfied ? "ok" : "VIOLATED", e.name.c_str(),
                      e.observed, e.declared, e.inequality.c_str());
      }
      s += buf;
    }
    char tail[192];
    std::snprintf(tail, sizeof tail,
                  "estimated constants: L1=%.6g L2=%.6g L3=%.6g L4=%.6g "
                  "iota=%.6g; violations=%d\n",
                  l1_hat, l2_hat, l3_hat, l4_hat, iota_hat, violations());
    return s + tail;
  }
};

namespace detail {

// Cheap deterministic uniform stream for the audit sampler.
class AuditRng {
 public:
  AuditRng(std::uint64_t seed, std::uint64_t substream)
      : state_(stream_state(StreamKey{seed, 0, substream})) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * to_unit(counter_value(state_, next_++));
  }
  Vector box(int dim, double radius) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = uniform(-radius, radius);
    return v;
  }

 private:
  std::uint64_t state_;
  std::uint64_t next_ = 0;
};

inline Vector audit_state_sample(AuditRng& rng, int m, double radius,
                                 const DomainSpec* dom) {
  Vector x = rng.box(m, radius);
  return dom ? dom->project(x) : x;
}

// A boundary point: project a far exterior point along a sampled direction
// (works for every bounded convex domain; for a half-space one of the two
// directions exits the domain).
inline Vector audit_boundary_sample(AuditRng& rng, int m, double radius,
                                    const DomainSpec* dom) {
  Vector u = rng.box(m, 1.0);
  if (u.norm() < 1e-9) u = Vector::Ones(m);
  u /= u.norm();
  if (!dom) return u * radius;
  const double big = 1e3 * (1.0 + radius);
  Vector p = dom->project(u * big);
  if (std::abs(dom->level(p)) <= 1e-8) return p;
  return dom->project(-u * big);
}

struct RatioTracker {
  double worst = 0.0;  // max ratio seen
  long samples = 0;
  bool infinite = false;
  void add(double num, double den) {
    ++samples;
    if (num <= 0.0) return;  // satisfied for any constant
    if (den <= 1e-300) {
      infinite = true;
      return;
    }
    worst = std::max(worst, num / den);
  }
};

inline AuditEntry upper_entry(const std::string& name,
                              const std::string& inequality,
                              const RatioTracker& t, double declared) {
  AuditEntry e;
  e.name = name;
  e.inequality = inequality;
  e.observed = t.infinite ? kInf : t.worst;
  e.declared = declared;
  e.samples = t.samples;
  if (std::isnan(declared)) {
    e.satisfied = !t.infinite;  // existence of a finite constant
  } else {
    e.satisfied = !t.infinite && t.worst <= declared * (1.0 + 1e-9) + 1e-12;
  }
  return e;
}

}  // namespace detail

// Empirical audit of the standing assumptions: forward growth/Lipschitz and
// diffusion bound, uniform ellipticity, driver and boundary-driver growth/
// Lipschitz, potential normalization and interiority at 0, and the five
// gamma-uniform compatibility inequalities coupling the Yosida gradients of
// the potentials with the drivers.  Sampling-based: violations are report
// entries, never exceptions, and absence of violations is evidence, not
// proof.
inline AuditReport audit_assumptions(const CoefficientSet& c,
                                     const ConvexPotential& phi,
                                     const ConvexPotential& psi,
                                     long sample_budget, std::uint64_t seed,
                                     const AuditOptions& opt = {}) {
  validate(c);
  detail::require(sample_budget >= 1, "audit_assumptions: sample_budget >= 1");
  detail::require(phi.dimension() == c.value_dim &&
                      psi.dimension() == c.value_dim,
                  "audit_assumptions: potential dimension mismatch");
  if (opt.domain) {
    detail::require(opt.domain->dimension == c.state_dim,
                    "audit_assumptions: domain dimension mismatch");
  }

  const int m = c.state_dim;
  const int d = c.value_dim;
  detail::AuditRng rng(seed, 9101);

  detail::RatioTracker fwd_lip, drift_growth, diff_bound;
  detail::RatioTracker drv_lip, drv_growth, bnd_lip, bnd_growth;
  detail::RatioTracker mixed_phi_g, mixed_psi_f, mixed_phi_g0, mixed_psi_f0;
  double iota_hat = kInf;
  long iota_samples = 0;
  double mixed_sign_min = kInf;
  long mixed_sign_samples = 0;
  double phi_min = kInf, psi_min = kInf;

  for (long i = 0; i < sample_budget; ++i) {
    const double s = rng.uniform(0.0, opt.time_horizon);
    const Vector x1 = detail::audit_state_sample(rng, m, opt.x_radius, opt.domain);
    const Vector x2 = detail::audit_state_sample(rng, m, opt.x_radius, opt.domain);
    const Vector xb1 =
        detail::audit_boundary_sample(rng, m, opt.x_radius, opt.domain);
    const Vector xb2 =
        detail::audit_boundary_sample(rng, m, opt.x_radius, opt.domain);
    const Vector y1 = rng.box(d, opt.y_radius);
    const Vector y2 = rng.box(d, opt.y_radius);
    Vector h = rng.box(m, 1.0);
    if (h.norm() < 1e-9) h = Vector::Ones(m);
    const Vector y0 = Vector::Zero(d);

    // Forward coefficients.
    const Vector b1 = c.drift(s, x1), b2 = c.drift(s, x2);
    const Matrix s1 = c.diffusion(s, x1), s2 = c.diffusion(s, x2);
    const double dx2 = (x1 - x2).squaredNorm();
    if (dx2 > 1e-20) {
      fwd_lip.add((b1 - b2).squaredNorm() + (s1 - s2).squaredNorm(), dx2);
    }
    drift_growth.add(b1.squaredNorm(), 1.0 + x1.squaredNorm());
    diff_bound.add(s1.squaredNorm(), 1.0);
    const double rayleigh = h.dot(s1 * (s1.transpose() * h)) / h.squaredNorm();
    iota_hat = std::min(iota_hat, rayleigh);
    ++iota_samples;

    // Driver and boundary driver.
    const Vector f1 = c.driver(s, x1, y1), f2 = c.driver(s, x2, y2);
    const double dxy2 = dx2 + (y1 - y2).squaredNorm();
    if (dxy2 > 1e-20) drv_lip.add((f1 - f2).squaredNorm(), dxy2);
    drv_growth.add(f1.squaredNorm(),
                   1.0 + x1.squaredNorm() + y1.squaredNorm());
    const Vector g1 = c.boundary_driver(s, xb1, y1);
    const Vector g2 = c.boundary_driver(s, xb2, y2);
    const double dby2 = (xb1 - xb2).squaredNorm() + (y1 - y2).squaredNorm();
    if (dby2 > 1e-20) bnd_lip.add((g1 - g2).squaredNorm(), dby2);
    bnd_growth.add(g1.squaredNorm(),
                   1.0 + xb1.squaredNorm() + y1.squaredNorm());

    // Potential normalization (minimum over finite sampled values).
    const double pv = phi.value(y1);
    if (pv < kInf) phi_min = std::min(phi_min, pv);
    const double qv = psi.value(y1);
    if (qv < kInf) psi_min = std::min(psi_min, qv);

    // Mixed compatibility inequalities on the gamma grid.
    for (const double gamma : opt.gammas) {
      const Vector gp = yosida_gradient(phi, y1, gamma);
      const Vector gq = yosida_gradient(psi, y1, gamma);
      mixed_sign_min = std::min(mixed_sign_min, gp.dot(gq));
      ++mixed_sign_samples;
      const double np = gp.norm(), nq = gq.norm();
      const Vector gb = c.boundary_driver(s, xb1, y1);
      const Vector gb0 = c.boundary_driver(s, xb1, y0);
      const Vector fc = c.driver(s, x1, y1);
      const Vector fc0 = c.driver(s, x1, y0);
      mixed_phi_g.add(gp.dot(gb), nq * (1.0 + gb.norm()));
      mixed_psi_f.add(gq.dot(fc), np * (1.0 + fc.norm()));
      mixed_phi_g0.add(-gp.dot(gb0), nq * (1.0 + gb0.norm()));
      mixed_psi_f0.add(-gq.dot(fc0), np * (1.0 + fc0.norm()));
    }
  }

  AuditReport rep;
  const double L1 = c.growth_forward, L3 = c.growth_driver,
               L4 = c.growth_boundary;
  rep.entries.push_back(detail::upper_entry(
      "forward_lipschitz", "|b(s,x1)-b(s,x2)|^2 + |sigma dx|^2 <= L1 |x1-x2|^2",
      fwd_lip, L1));
  rep.entries.push_back(detail::upper_entry(
      "drift_growth", "|b(s,x)|^2 <= L1 (1+|x|^2)", drift_growth, L1));
  rep.entries.push_back(detail::upper_entry(
      "diffusion_bound", "|sigma(s,x)|^2 <= L1", diff_bound, L1));
  {
    AuditEntry e;
    e.name = "ellipticity";
    e.inequality = "<sigma sigma^T h, h> >= iota |h|^2";
    e.observed = iota_hat;
    e.declared = c.ellipticity;
    e.samples = iota_samples;
    e.satisfied = iota_hat >= c.ellipticity * (1.0 - 1e-9) - 1e-12;
    rep.entries.push_back(e);
  }
  rep.entries.push_back(detail::upper_entry(
      "driver_lipschitz", "|df|^2 <= L3 (|dx|^2+|dy|^2)", drv_lip, L3));
  rep.entries.push_back(detail::upper_entry(
      "driver_growth", "|f|^2 <= L3 (1+|x|^2+|y|^2)", drv_growth, L3));
  rep.entries.push_back(detail::upper_entry(
      "boundary_lipschitz", "|dg|^2 <= L4 (|dx|^2+|dy|^2)", bnd_lip, L4));
  rep.entries.push_back(detail::upper_entry(
      "boundary_growth", "|g|^2 <= L4 (1+|x|^2+|y|^2)", bnd_growth, L4));

  {
    const Vector zero = Vector::Zero(d);
    const double p0 = phi.value(zero), q0 = psi.value(zero);
    AuditEntry e;
    e.name = "potential_normalized";
    e.inequality = "phi(y) >= phi(0) = 0, psi(y) >= psi(0) = 0";
    e.observed = std::min(std::min(phi_min, psi_min), -std::abs(p0) - std::abs(q0));
    e.samples = sample_budget;
    e.satisfied = std::abs(p0) <= 1e-12 && std::abs(q0) <= 1e-12 &&
                  phi_min >= -1e-12 && psi_min >= -1e-12;
    rep.entries.push_back(e);
  }
  {
    // Interior containment of 0: the potentials must be finite on a small
    // ball around the origin.
    const double delta = 1e-6;
    bool inside = true;
    for (int k = 0; k < d; ++k) {
      Vector e1 = Vector::Zero(d), e2 = Vector::Zero(d);
      e1[k] = delta;
      e2[k] = -delta;
      inside = inside && phi.value(e1) < kInf && phi.value(e2) < kInf &&
               psi.value(e1) < kInf && psi.value(e2) < kInf;
    }
    AuditEntry e;
    e.name = "zero_interior";
    e.inequality = "0 in Int(Dom(phi)) and Int(Dom(psi))";
    e.observed = inside ? 1.0 : 0.0;
    e.samples = 4L * d;
    e.satisfied = inside;
    rep.entries.push_back(e);
  }
  {
    AuditEntry e;
    e.name = "mixed_gradient_sign";
    e.inequality = "<grad phi_g(y), grad psi_g(y)> >= 0";
    e.observed = mixed_sign_samples ? mixed_sign_min : 0.0;
    e.samples = mixed_sign_samples;
    e.satisfied = e.observed >= -1e-12;
    rep.entries.push_back(e);
  }
  rep.entries.push_back(detail::upper_entry(
      "mixed_phi_g", "<grad phi_g, g(s,x,y)> <= L2 |grad psi_g| (1+|g|)",
      mixed_phi_g, kNaN));
  rep.entries.push_back(detail::upper_entry(
      "mixed_psi_f", "<grad psi_g, f(s,x,y)> <= L2 |grad phi_g| (1+|f|)",
      mixed_psi_f, kNaN));
  rep.entries.push_back(detail::upper_entry(
      "mixed_phi_g0", "-<grad phi_g, g(s,x,0)> <= L2 |grad psi_g| (1+|g0|)",
      mixed_phi_g0, kNaN));
  rep.entries.push_back(detail::upper_entry(
      "mixed_psi_f0", "-<grad psi_g, f(s,x,0)> <= L2 |grad phi_g| (1+|f0|)",
      mixed_psi_f0, kNaN));

  rep.l1_hat = std::max(
      {fwd_lip.worst, drift_growth.worst, diff_bound.worst});
  rep.l3_hat = std::max(drv_lip.worst, drv_growth.worst);
  rep.l4_hat = std::max(bnd_lip.worst, bnd_growth.worst);
  auto finite_or = [](const detail::RatioTracker& t) {
    return t.infinite ? kInf : t.worst;
  };
  rep.l2_hat = std::max({finite_or(mixed_phi_g), finite_or(mixed_psi_f),
                         finite_or(mixed_phi_g0), finite_or(mixed_psi_f0)});
  rep.iota_hat = iota_hat;
  return rep;
}

// Shipped potential pairs that pass the compatibility audit against the
// built-in models.  `dim` is the backward dimension.
struct PotentialPair {
  std::string name;
  ConvexPotential phi;
  ConvexPotential psi;
};

inline std::vector<PotentialPair> compatible_potential_pairs(int dim) {
  std::vector<PotentialPair> out;
  out.push_back({"free", ConvexPotential::zero(dim), ConvexPotential::zero(dim)});
  out.push_back({"positive-y", ConvexPotential::box_indicator(dim, 0.0, kInf),
                 ConvexPotential::zero(dim)});
  out.push_back({"soft-positive", ConvexPotential::positive_part(dim, 1.0),
                 ConvexPotential::zero(dim)});
  out.push_back({"damped", ConvexPotential::quadratic(dim, 1.0),
                 ConvexPotential::zero(dim)});
  out.push_back({"abs-soft", ConvexPotential::l1(dim, 0.5),
                 ConvexPotential::zero(dim)});
  out.push_back({"soft-positive-box", ConvexPotential::positive_part(dim, 1.0),
                 ConvexPotential::box_indicator(dim, -1.0, 3.0)});
  return out;
}

inline PotentialPair make_potential_pair(const std::string& name, int dim) {
  for (auto& p : compatible_potential_pairs(dim)) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown potential pair: " + name);
}

}  // namespace mvsde
