#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// Uniform grid on [t_start, t_end] with n_steps steps.
struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double t0, double t1, int n) : t_start(t0), t_end(t1), n_steps(n) {
    detail::require(std::isfinite(t0) && std::isfinite(t1) && t1 > t0,
                    "TimeGrid: need finite t_start < t_end");
    detail::require(n >= 1, "TimeGrid: need at least one step");
  }
  double dt() const { return (t_end - t_start) / n_steps; }
  double time(int i) const { return t_start + dt() * i; }
};

// Step-size rule for the multiscale sweeps: either a fixed step count, or
// dt = min(dt_cap, epsilon * period / steps_per_period) so that one fast
// period is always resolved by `steps_per_period` steps.
struct GridRule {
  std::optional<int> n_steps;
  double steps_per_period = 64.0;
  double dt_cap = 1e-3;

  TimeGrid make(double t0, double t1, std::optional<double> epsilon,
                std::optional<double> period) const {
    if (n_steps) return TimeGrid(t0, t1, *n_steps);
    double dt = dt_cap;
    if (epsilon && period) {
      dt = std::min(dt, *epsilon * *period / steps_per_period);
    }
    detail::require(dt > 0.0, "GridRule: nonpositive step");
    const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt - 1e-12)));
    return TimeGrid(t0, t1, n);
  }
};

// One simulated ensemble of reflected paths.  Flat row-major storage, path
// major: states has (n_steps+1)*dim entries per path, reflections and
// increments n_steps*dim, variation n_steps+1.  `reflections` holds the
// inward projection residuals dK_i = X_{i+1} - X~_{i+1}; `variation` is the
// running total of |dK|.  Brownian increments are retained unless the caller
// opts out (memory).
struct PathEnsemble {
  TimeGrid grid;
  int n_paths = 0;
  int dim = 1;
  std::optional<double> epsilon;  // nullopt: averaged system
  std::uint64_t seed = 0;
  std::string scheme_tag = "projected-euler";

  std::vector<double> states;
  std::vector<double> reflections;
  std::vector<double> variation;
  std::vector<double> increments;

  bool has_increments() const { return !increments.empty(); }

  const double* state_ptr(int p, int i) const {
    return states.data() +
           (static_cast<std::size_t>(p) * (grid.n_steps + 1) + i) * dim;
  }
  const double* reflection_ptr(int p, int i) const {
    return reflections.data() +
           (static_cast<std::size_t>(p) * grid.n_steps + i) * dim;
  }
  const double* increment_ptr(int p, int i) const {
    return increments.data() +
           (static_cast<std::size_t>(p) * grid.n_steps + i) * dim;
  }
  double variation_at(int p, int i) const {
    return variation[static_cast<std::size_t>(p) * (grid.n_steps + 1) + i];
  }
  double dvariation(int p, int i) const {
    return variation_at(p, i + 1) - variation_at(p, i);
  }
  Vector state(int p, int i) const {
    Vector v(dim);
    std::memcpy(v.data(), state_ptr(p, i), sizeof(double) * dim);
    return v;
  }
  Vector reflection(int p, int i) const {
    Vector v(dim);
    std::memcpy(v.data(), reflection_ptr(p, i), sizeof(double) * dim);
    return v;
  }
};

namespace detail {

// Shared projected-Euler core.  `coeffs(s, x, b, sigma)` fills the drift and
// diffusion used on [s, s+dt); the multiscale and averaged systems differ
// only in that callable, so equal coefficient values give bitwise-equal
// ensembles under a shared seed.
template <class CoeffFn>
PathEnsemble simulate_core(const DomainSpec& dom, CoeffFn&& coeffs,
                           std::optional<double> epsilon_tag,
                           const TimeGrid& grid, const Vector& x0, int n_paths,
                           std::uint64_t seed, bool keep_increments) {
  detail::require(dom.dimension == x0.size(),
                  "simulate: x0 dimension does not match the domain");
  detail::require(n_paths >= 1, "simulate: need at least one path");
  detail::require(dom.level(x0) >= -dom.boundary_tolerance,
                  "simulate: x0 must lie in the closed domain");

  const int m = dom.dimension;
  const int n = grid.n_steps;
  const double dt = grid.dt();

  PathEnsemble out;
  out.grid = grid;
  out.n_paths = n_paths;
  out.dim = m;
  out.epsilon = epsilon_tag;
  out.seed = seed;
  out.states.resize(static_cast<std::size_t>(n_paths) * (n + 1) * m);
  out.reflections.resize(static_cast<std::size_t>(n_paths) * n * m);
  out.variation.resize(static_cast<std::size_t>(n_paths) * (n + 1));
  if (keep_increments) {
    out.increments.resize(static_cast<std::size_t>(n_paths) * n * m);
  }

  std::vector<double> local_inc;
  if (!keep_increments) local_inc.resize(static_cast<std::size_t>(n) * m);

  Vector x(m), b(m), xt(m), xn(m), db(m);
  Matrix sg(m, m);
  for (int p = 0; p < n_paths; ++p) {
    double* inc = keep_increments
                      ? out.increments.data() + static_cast<std::size_t>(p) * n * m
                      : local_inc.data();
    gaussian_increments_into(
        StreamKey{seed, static_cast<std::uint64_t>(p), 0}, dt,
        std::span<double>(inc, static_cast<std::size_t>(n) * m));

    x = x0;
    double kvar = 0.0;
    double* xs = out.states.data() + static_cast<std::size_t>(p) * (n + 1) * m;
    double* rs = out.reflections.data() + static_cast<std::size_t>(p) * n * m;
    double* vs = out.variation.data() + static_cast<std::size_t>(p) * (n + 1);
    std::memcpy(xs, x.data(), sizeof(double) * m);
    vs[0] = 0.0;
    for (int i = 0; i < n; ++i) {
      coeffs(grid.time(i), x, b, sg);
      std::memcpy(db.data(), inc + static_cast<std::size_t>(i) * m,
                  sizeof(double) * m);
      xt = x + b * dt + sg * db;
      if (!xt.allFinite()) {
        throw numerical_error("simulate: non-finite state at path " +
                              std::to_string(p) + ", step " + std::to_string(i));
      }
      xn = dom.project(xt);
      const Vector dk = xn - xt;
      kvar += dk.norm();
      std::memcpy(xs + static_cast<std::size_t>(i + 1) * m, xn.data(),
                  sizeof(double) * m);
      std::memcpy(rs + static_cast<std::size_t>(i) * m, dk.data(),
                  sizeof(double) * m);
      vs[i + 1] = kvar;
      x = xn;
    }
  }
  return out;
}

}  // namespace detail

// Multiscale system: coefficients evaluated at the accelerated time s/epsilon,
// left endpoint of each step.
inline PathEnsemble simulate(const DomainSpec& dom, const CoefficientSet& c,
                             double epsilon, const TimeGrid& grid,
                             const Vector& x0, int n_paths, std::uint64_t seed,
                             bool keep_increments = true) {
  validate(c);
  detail::require(epsilon > 0.0 && std::isfinite(epsilon),
                  "simulate: epsilon must be positive");
  detail::require(c.state_dim == dom.dimension,
                  "simulate: coefficient state dimension mismatch");
  auto coeffs = [&](double s, const Vector& x, Vector& b, Matrix& sg) {
    b = c.drift(s / epsilon, x);
    sg = c.diffusion(s / epsilon, x);
  };
  return detail::simulate_core(dom, coeffs, epsilon, grid, x0, n_paths, seed,
                               keep_increments);
}

// Averaged system: state-dependent coefficients only.
inline PathEnsemble simulate_averaged(const DomainSpec& dom,
                                      const AveragedCoefficients& avg,
                                      const TimeGrid& grid, const Vector& x0,
                                      int n_paths, std::uint64_t seed,
                                      bool keep_increments = true) {
  detail::require(avg.state_dim() == dom.dimension,
                  "simulate_averaged: coefficient state dimension mismatch");
  auto coeffs = [&](double, const Vector& x, Vector& b, Matrix& sg) {
    avg.drift_and_diffusion(x, b, sg);
  };
  return detail::simulate_core(dom, coeffs, std::nullopt, grid, x0, n_paths,
                               seed, keep_increments);
}

// A named scalar statistic of the terminal state.
struct TestFunctional {
  std::string name;
  std::function<double(const Vector&)> fn;
};

// Built-in weak-gap test functions: "x" (first coordinate), "x2" (its
// square), "cos" (its cosine).
inline TestFunctional make_functional(const std::string& name) {
  if (name == "x") {
    return {name, [](const Vector& x) { return x[0]; }};
  }
  if (name == "x2") {
    return {name, [](const Vector& x) { return x[0] * x[0]; }};
  }
  if (name == "cos") {
    return {name, [](const Vector& x) { return std::cos(x[0]); }};
  }
  throw std::invalid_argument("unknown test functional: " + name);
}

// Weak gap E[F(X^eps_T)] - E[F(Xbar_T)] per functional, estimated with
// common random numbers.  pooled_stderr combines the two per-run standard
// errors; paired_stderr is the stderr of the per-path differences (smaller
// under common seeds).
struct GapEstimate {
  std::string name;
  double gap = 0.0;
  double pooled_stderr = 0.0;
  double paired_stderr = 0.0;
};

namespace detail {

inline GapEstimate paired_gap(const std::string& name,
                              std::span<const double> a,
                              std::span<const double> b) {
  GapEstimate g;
  g.name = name;
  const auto [ma, sa] = mean_stderr(a);
  const auto [mb, sb] = mean_stderr(b);
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const auto [md, sd] = mean_stderr(diff);
  g.gap = md;
  g.pooled_stderr = std::sqrt(sa * sa + sb * sb);
  g.paired_stderr = sd;
  return g;
}

}  // namespace detail

inline std::vector<GapEstimate> weak_gap(
    const PathEnsemble& eps_run, const PathEnsemble& avg_run,
    const std::vector<TestFunctional>& functionals) {
  detail::require(eps_run.n_paths == avg_run.n_paths &&
                      eps_run.dim == avg_run.dim &&
                      eps_run.grid.n_steps == avg_run.grid.n_steps,
                  "weak_gap: ensembles are not paired");
  const int n = eps_run.n_paths;
  const int last = eps_run.grid.n_steps;
  std::vector<GapEstimate> out;
  std::vector<double> fa(n), fb(n);
  for (const auto& f : functionals) {
    for (int p = 0; p < n; ++p) {
      fa[p] = f.fn(eps_run.state(p, last));
      fb[p] = f.fn(avg_run.state(p, last));
    }
    out.push_back(detail::paired_gap(f.name, fa, fb));
  }
  return out;
}

inline std::vector<GapEstimate> weak_gap(
    const DomainSpec& dom, const CoefficientSet& c,
    const AveragedCoefficients& avg, double epsilon, const TimeGrid& grid,
    const Vector& x0, int n_paths, std::uint64_t seed,
    const std::vector<TestFunctional>& functionals) {
  const PathEnsemble eps_run =
      simulate(dom, c, epsilon, grid, x0, n_paths, seed, false);
  const PathEnsemble avg_run =
      simulate_averaged(dom, avg, grid, x0, n_paths, seed, false);
  return weak_gap(eps_run, avg_run, functionals);
}

// Pathwise health report.  monotonicity_min is the smallest value of
// <X_{i+1} - x*, -dK_i> over reflecting steps (outward residual against an
// anchor x* in the closed domain); convex projection makes it nonnegative up
// to rounding.
struct PathDiagnostics {
  double monotonicity_min = 0.0;
  double sup_square_moment = 0.0;   // mean of sup_i |X_i|^2
  double mean_variation = 0.0;      // mean total |K|
  double reflection_fraction = 0.0; // fraction of steps with a reflection
  double worst_boundary_level = 0.0;// max |level(X_{i+1})| on reflecting steps
};

inline PathDiagnostics path_diagnostics(const PathEnsemble& e,
                                        const DomainSpec& dom,
                                        const Vector& anchor) {
  detail::require(anchor.size() == e.dim, "path_diagnostics: anchor dimension");
  PathDiagnostics d;
  double mono = kInf;
  bool any_reflection = false;
  double sup_sum = 0.0, var_sum = 0.0;
  std::int64_t reflect_steps = 0;
  Vector x(e.dim), dk(e.dim);
  for (int p = 0; p < e.n_paths; ++p) {
    double sup = 0.0;
    for (int i = 0; i <= e.grid.n_steps; ++i) {
      x = e.state(p, i);
      sup = std::max(sup, x.squaredNorm());
      if (i < e.grid.n_steps) {
        dk = e.reflection(p, i);
        if (dk.cwiseAbs().maxCoeff() != 0.0) {
          any_reflection = true;
          ++reflect_steps;
          const Vector xn = e.state(p, i + 1);
          mono = std::min(mono, (xn - anchor).dot(-dk));
          d.worst_boundary_level =
              std::max(d.worst_boundary_level, std::abs(dom.level(xn)));
        }
      }
    }
    sup_sum += sup;
    var_sum += e.variation_at(p, e.grid.n_steps);
  }
  d.monotonicity_min = any_reflection ? mono : 0.0;
  d.sup_square_moment = sup_sum / e.n_paths;
  d.mean_variation = var_sum / e.n_paths;
  d.reflection_fraction =
      static_cast<double>(reflect_steps) /
      (static_cast<double>(e.n_paths) * e.grid.n_steps);
  return d;
}

// Binary path dump.  Layout: three little-endian uint64 (dim, n_paths,
// n_steps), one little-endian f64 (dt), then the states, reflections and
// variation arrays exactly as stored (row-major per path, little-endian f64).
inline void write_path_dump(const PathEnsemble& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("write_path_dump: cannot open " + path);
  auto put_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_u64(static_cast<std::uint64_t>(e.dim));
  put_u64(static_cast<std::uint64_t>(e.n_paths));
  put_u64(static_cast<std::uint64_t>(e.grid.n_steps));
  const double dt = e.grid.dt();
  out.write(reinterpret_cast<const char*>(&dt), sizeof dt);
  auto put_all = [&](const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  put_all(e.states);
  put_all(e.reflections);
  put_all(e.variation);
  if (!out) throw numerical_error("write_path_dump: write failed: " + path);
}

inline PathEnsemble read_path_dump(const std::string& path,
                                   double t_start = 0.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("read_path_dump: cannot open " + path);
  std::uint64_t dim = 0, n_paths = 0, n_steps = 0;
  double dt = 0.0;
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&n_paths), sizeof n_paths);
  in.read(reinterpret_cast<char*>(&n_steps), sizeof n_steps);
  in.read(reinterpret_cast<char*>(&dt), sizeof dt);
  if (!in || dim < 1 || dim > static_cast<std::uint64_t>(kMaxDim) ||
      n_paths < 1 || n_steps < 1 || !(dt > 0.0)) {
    throw std::invalid_argument("read_path_dump: bad header in " + path);
  }
  PathEnsemble e;
  e.dim = static_cast<int>(dim);
  e.n_paths = static_cast<int>(n_paths);
  e.grid = TimeGrid(t_start, t_start + dt * static_cast<double>(n_steps),
                    static_cast<int>(n_steps));
  e.states.resize(n_paths * (n_steps + 1) * dim);
  e.reflections.resize(n_paths * n_steps * dim);
  e.variation.resize(n_paths * (n_steps + 1));
  auto get_all = [&](std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  get_all(e.states);
  get_all(e.reflections);
  get_all(e.variation);
  if (!in) throw std::invalid_argument("read_path_dump: truncated file " + path);
  return e;
}

}  // namespace mvsde
