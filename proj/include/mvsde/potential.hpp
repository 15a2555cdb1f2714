#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/common.hpp"

namespace mvsde {

// Scalar convex building block with closed-form proximal map and one-sided
// subderivatives.  These are the coordinates of the decoupled potentials; the
// subderivative access is what lets the composite resolvent solve the scalar
// inclusion  y + w_f * df(y) + w_g * dg(y)  ∋  v  robustly at kinks.
class ScalarConvex {
 public:
  enum class Kind { zero, quadratic, abs, box, positive_part };

  static ScalarConvex zero() { return ScalarConvex(Kind::zero, 0, 0, -kInf, kInf); }
  static ScalarConvex quadratic(double lambda) {
    detail::require(lambda >= 0.0 && std::isfinite(lambda),
                    "quadratic potential: lambda must be >= 0");
    return ScalarConvex(Kind::quadratic, lambda, 0, -kInf, kInf);
  }
  static ScalarConvex abs(double scale) {
    detail::require(scale >= 0.0 && std::isfinite(scale),
                    "abs potential: scale must be >= 0");
    return ScalarConvex(Kind::abs, scale, 0, -kInf, kInf);
  }
  // Indicator of [lo, hi]; must contain 0 so the normalization value(0) = 0
  // holds.  Either end may be infinite.
  static ScalarConvex box(double lo, double hi) {
    detail::require(lo <= 0.0 && hi >= 0.0 && lo < hi,
                    "box indicator: need lo <= 0 <= hi, lo < hi");
    return ScalarConvex(Kind::box, 0, 0, lo, hi);
  }
  // charge * max(0, -y): linear penalty for going negative.
  static ScalarConvex positive_part(double charge) {
    detail::require(charge >= 0.0 && std::isfinite(charge),
                    "positive_part potential: charge must be >= 0");
    return ScalarConvex(Kind::positive_part, charge, 0, -kInf, kInf);
  }

  Kind kind() const { return kind_; }
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }
  bool is_zero() const { return kind_ == Kind::zero; }

  double value(double y) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::quadratic:
        return 0.5 * a_ * y * y;
      case Kind::abs:
        return a_ * std::abs(y);
      case Kind::box:
        return (y >= lo_ && y <= hi_) ? 0.0 : kInf;
      case Kind::positive_part:
        return y < 0.0 ? -a_ * y : 0.0;
    }
    return 0.0;
  }

  // One-sided subderivatives (left/right).  Outside kinks they coincide; at a
  // closed domain endpoint the outward side is infinite.
  double sub_lo(double y) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::quadratic:
        return a_ * y;
      case Kind::abs:
        return y > 0.0 ? a_ : -a_;
      case Kind::box:
        return y <= lo_ ? -kInf : 0.0;
      case Kind::positive_part:
        return y > 0.0 ? 0.0 : -a_;
    }
    return 0.0;
  }
  double sub_hi(double y) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::quadratic:
        return a_ * y;
      case Kind::abs:
        return y < 0.0 ? -a_ : a_;
      case Kind::box:
        return y >= hi_ ? kInf : 0.0;
      case Kind::positive_part:
        return y < 0.0 ? -a_ : 0.0;
    }
    return 0.0;
  }

  // Proximal map: argmin_z value(z) + (z - v)^2 / (2 gamma), closed form.
  double prox(double v, double gamma) const {
    switch (kind_) {
      case Kind::zero:
        return v;
      case Kind::quadratic:
        return v / (1.0 + gamma * a_);
      case Kind::abs: {
        const double t = gamma * a_;
        if (v > t) return v - t;
        if (v < -t) return v + t;
        return 0.0;
      }
      case Kind::box:
        return std::clamp(v, lo_, hi_);
      case Kind::positive_part:
        return v >= 0.0 ? v : std::min(v + gamma * a_, 0.0);
    }
    return v;
  }

 private:
  ScalarConvex(Kind k, double a, double b, double lo, double hi)
      : kind_(k), a_(a), b_(b), lo_(lo), hi_(hi) {}
  Kind kind_;
  double a_;  // quadratic curvature / abs scale / positive_part charge
  double b_;  // reserved
  double lo_, hi_;
};

// A proper convex lower semicontinuous potential, normalized so that
// value(0) = 0 and value >= 0.  Decoupled potentials act coordinatewise
// through a ScalarConvex per coordinate and expose subderivative access;
// custom potentials only carry (value, prox) and fall back to splitting in
// the composite resolvent.
class ConvexPotential {
 public:
  using EvalFn = std::function<double(const Vector&)>;
  using ProxFn = std::function<Vector(const Vector&, double)>;

  static ConvexPotential zero(int dim) {
    return from_scalar(dim, ScalarConvex::zero(), "zero");
  }
  static ConvexPotential quadratic(int dim, double lambda) {
    return from_scalar(dim, ScalarConvex::quadratic(lambda),
                       "quadratic(" + fmt(lambda) + ")");
  }
  static ConvexPotential l1(int dim, double scale = 1.0) {
    return from_scalar(dim, ScalarConvex::abs(scale), "abs(" + fmt(scale) + ")");
  }
  static ConvexPotential box_indicator(int dim, double lo, double hi) {
    return from_scalar(dim, ScalarConvex::box(lo, hi),
                       "box[" + fmt(lo) + "," + fmt(hi) + "]");
  }
  static ConvexPotential positive_part(int dim, double charge) {
    return from_scalar(dim, ScalarConvex::positive_part(charge),
                       "positive_part(" + fmt(charge) + ")");
  }
  // User-supplied potential; treated as non-decoupled.
  static ConvexPotential custom(int dim, EvalFn eval, ProxFn prox,
                                std::string name = "custom") {
    detail::check_dim(dim, "ConvexPotential::custom");
    detail::require(static_cast<bool>(eval) && static_cast<bool>(prox),
                    "ConvexPotential::custom: need eval and prox");
    ConvexPotential p;
    p.dim_ = dim;
    p.decoupled_ = false;
    p.eval_ = std::move(eval);
    p.prox_ = std::move(prox);
    p.name_ = std::move(name);
    return p;
  }

  int dimension() const { return dim_; }
  bool decoupled() const { return decoupled_; }
  const std::string& name() const { return name_; }
  const std::vector<ScalarConvex>& coordinates() const { return coords_; }

  double value(const Vector& y) const {
    detail::require(y.size() == dim_, "potential value: wrong dimension");
    if (!decoupled_) return eval_(y);
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double vi = coords_[i].value(y[i]);
      if (vi == kInf) return kInf;
      s += vi;
    }
    return s;
  }

  Vector prox(const Vector& v, double gamma) const {
    detail::require(v.size() == dim_, "potential prox: wrong dimension");
    detail::require(gamma > 0.0 && std::isfinite(gamma),
                    "potential prox: gamma must be positive");
    if (!decoupled_) return prox_(v, gamma);
    Vector out(dim_);
    for (int i = 0; i < dim_; ++i) out[i] = coords_[i].prox(v[i], gamma);
    return out;
  }

 private:
  static std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
  }
  static ConvexPotential from_scalar(int dim, const ScalarConvex& s,
                                     std::string name) {
    detail::check_dim(dim, "ConvexPotential");
    ConvexPotential p;
    p.dim_ = dim;
    p.decoupled_ = true;
    p.coords_.assign(static_cast<std::size_t>(dim), s);
    p.name_ = std::move(name);
    return p;
  }
  int dim_ = 1;
  bool decoupled_ = true;
  std::vector<ScalarConvex> coords_;
  EvalFn eval_;
  ProxFn prox_;
  std::string name_ = "zero";
};

// Moreau envelope: min_z value(z) + |z - v|^2/(2 gamma), evaluated at the
// proximal point.  Smooth lower approximation of the potential.
inline double moreau_envelope(const ConvexPotential& p, const Vector& v,
                              double gamma) {
  Vector j = p.prox(v, gamma);
  return p.value(j) + (j - v).squaredNorm() / (2.0 * gamma);
}

// Yosida approximation gradient (v - prox(v, gamma)) / gamma; an element of
// the subdifferential at the proximal point.
inline Vector yosida_gradient(const ConvexPotential& p, const Vector& v,
                              double gamma) {
  return (v - p.prox(v, gamma)) / gamma;
}

// One backward step through both potentials: solves
//   y + w_phi * d(phi)(y) + w_psi * d(psi)(y)  ∋  v
// and reports y together with the captured increments du ∈ w_phi * d(phi)(y),
// dv ∈ w_psi * d(psi)(y), so that y + du + dv = v.
struct ResolventStep {
  Vector y;
  Vector du;
  Vector dv;
  bool exact = true;  // false when the sequential-splitting fallback was used
};

namespace detail {

struct ScalarStep {
  double y, du, dv;
};

// Scalar composite resolvent.  Closed forms when at most one term is active;
// otherwise bisection on the monotone one-sided derivative of the strongly
// convex objective  w_f f + w_g g + (. - v)^2/2  to absolute tolerance 1e-12.
inline ScalarStep scalar_composite(const ScalarConvex& f, double wf,
                                   const ScalarConvex& g, double wg,
                                   double v) {
  const bool af = wf > 0.0 && !f.is_zero();
  const bool ag = wg > 0.0 && !g.is_zero();
  if (!af && !ag) return {v, 0.0, 0.0};
  if (af && !ag) {
    const double y = f.prox(v, wf);
    return {y, v - y, 0.0};
  }
  if (!af && ag) {
    const double y = g.prox(v, wg);
    return {y, 0.0, v - y};
  }

  const double lo = std::max(f.domain_lo(), g.domain_lo());
  const double hi = std::min(f.domain_hi(), g.domain_hi());
  if (!(lo <= hi)) {
    throw numerical_error(
        "composite_resolvent: potential domains do not intersect");
  }
  auto d_lo = [&](double y) {
    return y - v + wf * f.sub_lo(y) + wg * g.sub_lo(y);
  };
  auto d_hi = [&](double y) {
    return y - v + wf * f.sub_hi(y) + wg * g.sub_hi(y);
  };

  double y = 0.0;
  bool found = false;
  if (std::isfinite(lo) && d_hi(lo) >= 0.0) {
    y = lo;
    found = true;
  } else if (std::isfinite(hi) && d_lo(hi) <= 0.0) {
    y = hi;
    found = true;
  }
  if (!found) {
    // Bracket the minimizer, expanding from the clamped input.
    double a = std::clamp(v, lo, hi);
    double b = a;
    double step = std::max(1.0, std::abs(v));
    int guard = 0;
    while (d_hi(a) > 0.0 && a > lo) {
      a = std::max(lo, a - step);
      step *= 2.0;
      if (++guard > 200) {
        throw numerical_error("composite_resolvent: bisection bracket failed");
      }
    }
    step = std::max(1.0, std::abs(v));
    guard = 0;
    while (d_lo(b) < 0.0 && b < hi) {
      b = std::min(hi, b + step);
      step *= 2.0;
      if (++guard > 200) {
        throw numerical_error("composite_resolvent: bisection bracket failed");
      }
    }
    // Invariant: minimizer in [a, b].
    int it = 0;
    while (b - a > 1e-12) {
      const double mid = 0.5 * (a + b);
      if (d_hi(mid) < 0.0) {
        a = mid;
      } else if (d_lo(mid) > 0.0) {
        b = mid;
      } else {
        a = b = mid;  // stationary point hit exactly
      }
      if (++it > 200) break;
    }
    y = 0.5 * (a + b);
    if (std::isfinite(lo)) y = std::max(y, lo);
    if (std::isfinite(hi)) y = std::min(y, hi);
  }

  // Split the residual r = v - y into du + dv with each increment inside its
  // scaled subdifferential; minimal-norm choice, midpoint fallback when the
  // bisection tolerance leaves the intervals disjoint at a kink.
  const double r = v - y;
  const double alo = wf * f.sub_lo(y), ahi = wf * f.sub_hi(y);
  const double blo = wg * g.sub_lo(y), bhi = wg * g.sub_hi(y);
  double ulo = std::max(alo, r - bhi);
  double uhi = std::min(ahi, r - blo);
  double du;
  if (ulo <= uhi) {
    du = std::clamp(0.5 * r, ulo, uhi);
  } else if (std::isfinite(ulo) && std::isfinite(uhi)) {
    du = 0.5 * (ulo + uhi);
  } else {
    du = std::isfinite(ulo) ? ulo : (std::isfinite(uhi) ? uhi : 0.0);
  }
  return {y, du, r - du};
}

}  // namespace detail

inline ResolventStep composite_resolvent(const ConvexPotential& phi,
                                         const ConvexPotential& psi,
                                         const Vector& v, double w_phi,
                                         double w_psi) {
  detail::require(phi.dimension() == psi.dimension(),
                  "composite_resolvent: dimension mismatch");
  detail::require(v.size() == phi.dimension(),
                  "composite_resolvent: wrong input dimension");
  detail::require(w_phi >= 0.0 && w_psi >= 0.0,
                  "composite_resolvent: weights must be >= 0");
  const int d = phi.dimension();
  ResolventStep out;
  out.y.resize(d);
  out.du.resize(d);
  out.dv.resize(d);

  if (phi.decoupled() && psi.decoupled()) {
    for (int i = 0; i < d; ++i) {
      const auto s = detail::scalar_composite(phi.coordinates()[i], w_phi,
                                              psi.coordinates()[i], w_psi,
                                              v[i]);
      out.y[i] = s.y;
      out.du[i] = s.du;
      out.dv[i] = s.dv;
    }
    out.exact = true;
    return out;
  }

  // Sequential splitting: resolve phi first, then psi.  The increments still
  // sum to v - y exactly, but du is a subgradient at the intermediate point.
  Vector mid = (w_phi > 0.0) ? phi.prox(v, w_phi) : v;
  out.du = v - mid;
  out.y = (w_psi > 0.0) ? psi.prox(mid, w_psi) : mid;
  out.dv = mid - out.y;
  out.exact = false;
  return out;
}

// Empirical monotonicity certificate for the Yosida approximation: the
// smallest inner product <y1 - y2, G(y1) - G(y2)> over the given sample
// pairs.  For a convex potential it is nonnegative up to rounding.
struct MonotonicityReport {
  double min_inner_product = 0.0;
  int pairs = 0;
  int violations = 0;  // entries below -1e-12
};

inline MonotonicityReport graph_monotonicity_certificate(
    const ConvexPotential& p, const std::vector<std::pair<Vector, Vector>>& samples,
    double gamma) {
  MonotonicityReport rep;
  rep.pairs = static_cast<int>(samples.size());
  rep.min_inner_product = samples.empty() ? 0.0 : kInf;
  for (const auto& [y1, y2] : samples) {
    const Vector g1 = yosida_gradient(p, y1, gamma);
    const Vector g2 = yosida_gradient(p, y2, gamma);
    const double ip = (y1 - y2).dot(g1 - g2);
    rep.min_inner_product = std::min(rep.min_inner_product, ip);
    if (ip < -1e-12) ++rep.violations;
  }
  return rep;
}

}  // namespace mvsde
