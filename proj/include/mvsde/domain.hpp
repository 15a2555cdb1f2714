#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include "mvsde/common.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// A convex region O = {x : level(x) > 0} described by its level function, the
// level gradient (unit inward normal on the boundary), and the Euclidean
// projection onto the closed region.  The projection is what the forward
// scheme uses; level/gradient classify points and orient reflections.
struct DomainSpec {
  int dimension = 1;
  std::function<double(const Vector&)> level;
  std::function<Vector(const Vector&)> level_gradient;
  std::function<Vector(const Vector&)> project;
  double boundary_tolerance = 1e-10;
  std::string name = "custom";
};

inline bool is_on_boundary(const DomainSpec& dom, const Vector& x) {
  return std::abs(dom.level(x)) <= dom.boundary_tolerance;
}

inline bool is_in_closure(const DomainSpec& dom, const Vector& x) {
  return dom.level(x) >= -dom.boundary_tolerance;
}

// Closed ball of given radius centered at the origin.
// level(x) = (r^2 - |x|^2) / (2r) has unit gradient -x/r on |x| = r.
inline DomainSpec make_ball_domain(int dim, double radius) {
  detail::check_dim(dim, "make_ball_domain");
  detail::require(radius > 0.0 && std::isfinite(radius),
                  "make_ball_domain: radius must be positive and finite");
  DomainSpec d;
  d.dimension = dim;
  d.name = "ball";
  d.level = [radius](const Vector& x) {
    return (radius * radius - x.squaredNorm()) / (2.0 * radius);
  };
  d.level_gradient = [radius](const Vector& x) -> Vector {
    return -x / radius;
  };
  d.project = [radius](const Vector& x) -> Vector {
    const double n = x.norm();
    if (n <= radius) return x;
    return x * (radius / n);
  };
  return d;
}

// Interval [lo, hi] in one dimension.
// level(x) = (x - lo)(hi - x)/(hi - lo) is positive inside and has slope +1 at
// lo and -1 at hi, so the gradient is the unit inward normal at both ends.
inline DomainSpec make_interval_domain(double lo, double hi) {
  detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
                  "make_interval_domain: need finite lo < hi");
  DomainSpec d;
  d.dimension = 1;
  d.name = "interval";
  const double width = hi - lo;
  d.level = [lo, hi, width](const Vector& x) {
    return (x[0] - lo) * (hi - x[0]) / width;
  };
  d.level_gradient = [lo, hi, width](const Vector& x) -> Vector {
    Vector g(1);
    g[0] = (lo + hi - 2.0 * x[0]) / width;
    return g;
  };
  d.project = [lo, hi](const Vector& x) -> Vector {
    Vector p(1);
    p[0] = std::clamp(x[0], lo, hi);
    return p;
  };
  return d;
}

// Half space {x_1 > 0}.  Unbounded, so it is only an analytic test fixture:
// projection clamps the first coordinate and the reflected path has a closed
// density (|Brownian motion| in 1-D).
inline DomainSpec make_halfspace_domain(int dim) {
  detail::check_dim(dim, "make_halfspace_domain");
  DomainSpec d;
  d.dimension = dim;
  d.name = "halfspace";
  d.level = [](const Vector& x) { return x[0]; };
  d.level_gradient = [dim](const Vector&) -> Vector {
    Vector g = Vector::Zero(dim);
    g[0] = 1.0;
    return g;
  };
  d.project = [](const Vector& x) -> Vector {
    Vector p = x;
    if (p[0] < 0.0) p[0] = 0.0;
    return p;
  };
  return d;
}

// Sampled validation of the projection/level/gradient triple.  Checks, over
// n random points in a box of the given radius:
//   - project is idempotent (to rounding) and nonexpansive,
//   - exterior residual y - project(y) is antiparallel to the inward normal
//     at the projected point,
//   - projection residuals satisfy the convex monotone-graph inequality
//     <project(y) - x, y - project(y)> >= 0 against interior anchors x,
//   - the gradient has unit norm at boundary points and points inward.
struct DomainValidation {
  int samples = 0;
  int idempotency_failures = 0;
  int nonexpansive_failures = 0;
  int alignment_failures = 0;
  int monotone_failures = 0;
  int gradient_failures = 0;
  double worst_alignment = 1.0;      // min cosine between -residual and normal
  double worst_monotone = 0.0;       // min monotone inner product
  double worst_gradient_norm = 0.0;  // max | |grad| - 1 | on boundary
  bool ok() const {
    return idempotency_failures == 0 && nonexpansive_failures == 0 &&
           alignment_failures == 0 && monotone_failures == 0 &&
           gradient_failures == 0;
  }
};

inline DomainValidation validate_domain(const DomainSpec& dom,
                                        double sample_radius, int n_samples,
                                        std::uint64_t seed) {
  detail::require(sample_radius > 0.0, "validate_domain: radius must be > 0");
  detail::require(n_samples > 0, "validate_domain: need samples");
  DomainValidation rep;
  rep.samples = n_samples;
  const int m = dom.dimension;
  const StreamKey key{seed, 0, 17};
  std::uint64_t ctr = 0;
  auto draw_point = [&]() {
    Vector y(m);
    for (int k = 0; k < m; ++k) {
      y[k] = uniform_draw(key, ctr++, -sample_radius, sample_radius);
    }
    return y;
  };
  // An interior anchor for the monotone check: pull some sampled projection
  // slightly inward along the gradient.
  Vector anchor = dom.project(Vector::Zero(m));
  {
    Vector g = dom.level_gradient(anchor);
    const double gn = g.norm();
    if (gn > 0.0 && dom.level(anchor) <= dom.boundary_tolerance) {
      anchor += (1e-3 * sample_radius / gn) * g;
    }
  }
  Vector prev = draw_point();
  Vector prev_p = dom.project(prev);
  for (int i = 0; i < n_samples; ++i) {
    Vector y = draw_point();
    Vector p = dom.project(y);
    // idempotency, up to rounding: scaling-type projections (the ball's
    // radial rescale) may land an ulp outside and re-project by O(eps |p|).
    Vector pp = dom.project(p);
    const double idem_tol =
        16.0 * std::numeric_limits<double>::epsilon() * (1.0 + p.norm());
    if ((pp - p).cwiseAbs().maxCoeff() > idem_tol) ++rep.idempotency_failures;
    // nonexpansiveness against the previous sample
    if ((p - prev_p).norm() > (y - prev).norm() * (1.0 + 1e-12) + 1e-14) {
      ++rep.nonexpansive_failures;
    }
    Vector r = y - p;  // exterior residual (zero when y already inside)
    const double rn = r.norm();
    if (rn > 1e-12) {
      Vector g = dom.level_gradient(p);
      const double gn = g.norm();
      if (gn > 1e-300) {
        // -r should be parallel to the inward normal g: cosine close to 1.
        const double cosine = (-r).dot(g) / (rn * gn);
        rep.worst_alignment = std::min(rep.worst_alignment, cosine);
        if (cosine < 1.0 - 1e-6) ++rep.alignment_failures;
      }
      const double mono = (p - anchor).dot(r);
      rep.worst_monotone = std::min(rep.worst_monotone, mono);
      if (mono < -1e-12) ++rep.monotone_failures;
      // p is a boundary point: unit gradient there.
      const double gap = std::abs(gn - 1.0);
      rep.worst_gradient_norm = std::max(rep.worst_gradient_norm, gap);
      if (gap > 1e-8) ++rep.gradient_failures;
      // inward: a small step along g from p must not decrease the level.
      Vector inside = p + 1e-7 * sample_radius * g / (gn > 0 ? gn : 1.0);
      if (dom.level(inside) < dom.level(p) - 1e-12) ++rep.gradient_failures;
    }
    prev = std::move(y);
    prev_p = std::move(p);
  }
  return rep;
}

}  // namespace mvsde
