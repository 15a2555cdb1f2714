#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/forward.hpp"
#include "mvsde/potential.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// Cross-path conditional-expectation estimator: polynomial basis in the state
// of total degree <= `degree`, optionally extended with an on-boundary
// indicator feature (1 when the path was reflected into the current state),
// ridge-stabilized normal equations.
struct RegressionConfig {
  int degree = 2;
  double ridge = 1e-10;
  bool boundary_indicator = true;
};

inline void validate(const RegressionConfig& reg) {
  detail::require(reg.degree >= 0 && reg.degree <= 6,
                  "RegressionConfig: degree must be in [0, 6]");
  detail::require(reg.ridge >= 0.0 && std::isfinite(reg.ridge),
                  "RegressionConfig: ridge must be >= 0");
}

// Whether the driver runs on the accelerated clock f(t/eps, x, y) of the
// original system or is replaced by its time average (the boundary driver is
// never accelerated and is shared by both modes).
enum class DriverMode { epsilon, averaged };

struct BackwardMoments {
  double sup_square = 0.0;       // mean over paths of sup_i |Y_i|^2
  double drift_energy = 0.0;     // mean of sum_i |dU_i|^2 / dt
  double boundary_energy = 0.0;  // mean of sum_i |dV_i|^2 / d|K|_i (where > 0)
};

struct BackwardSolution {
  int n_paths = 0;
  int n_steps = 0;
  int value_dim = 1;

  // Flat row-major stores, path major: values has (n_steps+1)*d entries per
  // path; du and dv (the per-step resolvent increments) n_steps*d.
  std::vector<double> values;
  std::vector<double> du;
  std::vector<double> dv;

  Vector start_value;                 // mean of Y at the first grid time
  Vector start_stderr;                // componentwise stderr of start_observations
  Eigen::MatrixXd start_observations; // n_paths x d pseudo-observations

  std::vector<double> mart_mean;  // per (step, component): mean of Y_{i+1}-C_i
  std::vector<double> mart_se;    // matching standard errors
  double martingale_statistic = 0.0;  // max |mean|/(se+floor) bias probe

  BackwardMoments moments;
  bool resolvent_exact = true;  // false if any splitting fallback was used
  std::vector<Eigen::MatrixXd> gain;  // optional: per step, mean d x m gain

  Vector value(int p, int i) const {
    Vector v(value_dim);
    const double* src = values.data() +
        (static_cast<std::size_t>(p) * (n_steps + 1) + i) * value_dim;
    for (int k = 0; k < value_dim; ++k) v[k] = src[k];
    return v;
  }
  Vector du_at(int p, int i) const {
    Vector v(value_dim);
    const double* src = du.data() +
        (static_cast<std::size_t>(p) * n_steps + i) * value_dim;
    for (int k = 0; k < value_dim; ++k) v[k] = src[k];
    return v;
  }
  Vector dv_at(int p, int i) const {
    Vector v(value_dim);
    const double* src = dv.data() +
        (static_cast<std::size_t>(p) * n_steps + i) * value_dim;
    for (int k = 0; k < value_dim; ++k) v[k] = src[k];
    return v;
  }
  // Cumulative resolvent residuals over [t_0, t_i].
  Vector u_cum(int p, int i) const {
    Vector v = Vector::Zero(value_dim);
    for (int j = 0; j < i; ++j) v += du_at(p, j);
    return v;
  }
  Vector v_cum(int p, int i) const {
    Vector v = Vector::Zero(value_dim);
    for (int j = 0; j < i; ++j) v += dv_at(p, j);
    return v;
  }
};

namespace detail {

inline std::vector<std::array<int, kMaxDim>> monomial_exponents(int m,
                                                                int degree) {
  std::vector<std::array<int, kMaxDim>> out;
  std::array<int, kMaxDim> e{};
  std::function<void(int, int)> rec = [&](int coord, int remaining) {
    if (coord == m) {
      out.push_back(e);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      e[coord] = k;
      rec(coord + 1, remaining - k);
    }
    e[coord] = 0;
  };
  rec(0, degree);
  return out;
}

inline void eval_basis_row(const std::vector<std::array<int, kMaxDim>>& exps,
                           const double* x, int m, bool with_indicator,
                           bool on_boundary, double* row) {
  std::size_t q = 0;
  for (const auto& e : exps) {
    double v = 1.0;
    for (int k = 0; k < m; ++k) {
      for (int j = 0; j < e[k]; ++j) v *= x[k];
    }
    row[q++] = v;
  }
  if (with_indicator) row[q] = on_boundary ? 1.0 : 0.0;
}

}  // namespace detail

// Solves the backward variational inequality along a simulated ensemble.
// Per step i (backward): the conditional expectation C_i of Y_{i+1} given X_i
// by cross-path least squares (plain mean when the states carry no spread,
// e.g. at the common start point); the explicit predictor
//   v_i = C_i + f(.)*dt + g(t_i, X_{i+1}, C_i)*d|K|_i   (g only where d|K|>0),
// with f on the accelerated clock or averaged per `mode`; then the implicit
// multivalued step (Y_i, dU_i, dV_i) = composite_resolvent(phi, psi, v_i, dt,
// d|K|_i), so Y_i + dU_i + dV_i = v_i per path and step.  The reported start
// value is the mean of Y at the first grid time; start_observations hold the
// per-path pre-resolvent pseudo-observations used for its standard error.
inline BackwardSolution solve(const PathEnsemble& paths,
                              const CoefficientSet& c,
                              const ConvexPotential& phi,
                              const ConvexPotential& psi,
                              const RegressionConfig& reg, DriverMode mode,
                              const AveragedCoefficients* avg = nullptr,
                              bool estimate_gain = false) {
  validate(c);
  validate(reg);
  detail::require(paths.n_paths >= 1 && paths.grid.n_steps >= 1,
                  "solve: empty ensemble");
  detail::require(c.state_dim == paths.dim,
                  "solve: coefficient state dimension mismatch");
  detail::require(phi.dimension() == c.value_dim &&
                      psi.dimension() == c.value_dim,
                  "solve: potential dimension mismatch");
  if (mode == DriverMode::epsilon) {
    detail::require(paths.epsilon.has_value(),
                    "solve: epsilon driver mode on an averaged ensemble");
  } else {
    detail::require(avg != nullptr,
                    "solve: averaged driver mode needs averaged coefficients");
  }
  detail::require(!estimate_gain || paths.has_increments(),
                  "solve: gain estimation needs retained Brownian increments");

  const int n = paths.grid.n_steps;
  const int N = paths.n_paths;
  const int d = c.value_dim;
  const int m = c.state_dim;
  const double dt = paths.grid.dt();
  const double eps = paths.epsilon.value_or(1.0);

  BackwardSolution sol;
  sol.n_paths = N;
  sol.n_steps = n;
  sol.value_dim = d;
  sol.values.resize(static_cast<std::size_t>(N) * (n + 1) * d);
  sol.du.resize(static_cast<std::size_t>(N) * n * d);
  sol.dv.resize(static_cast<std::size_t>(N) * n * d);
  sol.mart_mean.assign(static_cast<std::size_t>(n) * d, 0.0);
  sol.mart_se.assign(static_cast<std::size_t>(n) * d, 0.0);
  sol.start_observations.resize(N, d);
  if (estimate_gain) sol.gain.resize(n);

  auto value_ptr = [&](int p, int i) {
    return sol.values.data() +
           (static_cast<std::size_t>(p) * (n + 1) + i) * d;
  };

  std::vector<double> supsq(N, 0.0), drift_acc(N, 0.0), bnd_acc(N, 0.0);
  for (int p = 0; p < N; ++p) {
    const Vector y = c.terminal(paths.state(p, n));
    detail::require(y.size() == d, "solve: terminal value dimension mismatch");
    if (!y.allFinite()) throw numerical_error("solve: non-finite terminal value");
    double* dst = value_ptr(p, n);
    for (int k = 0; k < d; ++k) dst[k] = y[k];
    supsq[p] = y.squaredNorm();
  }

  const auto exps = detail::monomial_exponents(m, reg.degree);
  const int q = static_cast<int>(exps.size()) + (reg.boundary_indicator ? 1 : 0);
  Eigen::MatrixXd A(N, q), B(N, d), C(N, d);
  Eigen::MatrixXd G(q, q), R(q, d), beta(q, d);
  Eigen::MatrixXd zt, zbeta;
  if (estimate_gain) zt.resize(N, d * m);

  Vector cp(d), xp(m), fval(d), v(d), what(d);
  for (int i = n - 1; i >= 0; --i) {
    for (int p = 0; p < N; ++p) {
      const double* src = value_ptr(p, i + 1);
      for (int k = 0; k < d; ++k) B(p, k) = src[k];
    }

    // Plain mean when the cross-section has (numerically) no spread.
    bool mean_mode = (i == 0);
    if (!mean_mode) {
      const double* x0p = paths.state_ptr(0, i);
      double spread = 0.0;
      for (int p = 1; p < N && spread < 1e-13; ++p) {
        const double* xpp = paths.state_ptr(p, i);
        for (int k = 0; k < m; ++k) {
          spread = std::max(spread, std::abs(xpp[k] - x0p[k]));
        }
      }
      mean_mode = spread < 1e-13;
    }

    if (mean_mode) {
      const Eigen::RowVectorXd mu = B.colwise().mean();
      C = mu.replicate(N, 1);
      if (estimate_gain) {
        for (int p = 0; p < N; ++p) {
          const double* db = paths.increment_ptr(p, i);
          for (int k = 0; k < d; ++k) {
            for (int j = 0; j < m; ++j) zt(p, k * m + j) = B(p, k) * db[j];
          }
        }
        Eigen::MatrixXd zmu = zt.colwise().mean() / dt;
        sol.gain[i] = Eigen::Map<Eigen::MatrixXd>(zmu.data(), m, d).transpose();
      }
    } else {
      std::vector<double> row(q);
      for (int p = 0; p < N; ++p) {
        const bool on_bnd = i > 0 && paths.dvariation(p, i - 1) > 0.0;
        detail::eval_basis_row(exps, paths.state_ptr(p, i), m,
                               reg.boundary_indicator, on_bnd, row.data());
        for (int j = 0; j < q; ++j) A(p, j) = row[j];
      }
      G.noalias() = A.transpose() * A;
      const double scale = std::max(1.0, G.trace() / q);
      double ridge = std::max(reg.ridge, 1e-14) * scale;
      R.noalias() = A.transpose() * B;
      bool solved = false;
      for (int attempt = 0; attempt < 2 && !solved; ++attempt) {
        Eigen::MatrixXd Gr = G;
        Gr.diagonal().array() += ridge;
        beta = Gr.ldlt().solve(R);
        solved = beta.allFinite();
        ridge *= 1e6;
      }
      if (!solved) {
        throw numerical_error("solve: regression failed at step " +
                              std::to_string(i));
      }
      C.noalias() = A * beta;
      if (estimate_gain) {
        for (int p = 0; p < N; ++p) {
          const double* db = paths.increment_ptr(p, i);
          for (int k = 0; k < d; ++k) {
            for (int j = 0; j < m; ++j) zt(p, k * m + j) = B(p, k) * db[j];
          }
        }
        Eigen::MatrixXd Rz = A.transpose() * zt;
        Eigen::MatrixXd Gz = G;
        Gz.diagonal().array() += std::max(reg.ridge, 1e-14) * scale;
        zbeta = Gz.ldlt().solve(Rz);
        Eigen::MatrixXd fitted_mean = (A * zbeta).colwise().mean() / dt;
        sol.gain[i] =
            Eigen::Map<Eigen::MatrixXd>(fitted_mean.data(), m, d).transpose();
      }
    }

    // Martingale residual statistics for this step.  The t-ratio carries an
    // absolute floor in the denominator: on a (numerically) deterministic
    // cross-section the empirical se collapses to rounding dust, and any
    // ridge-size fitting bias would otherwise blow the ratio up even though
    // the bias is irrelevant at the scale of the values themselves.
    for (int k = 0; k < d; ++k) {
      double mean = 0.0;
      double babs = 0.0;
      for (int p = 0; p < N; ++p) {
        mean += B(p, k) - C(p, k);
        babs = std::max(babs, std::abs(B(p, k)));
      }
      mean /= N;
      double ss = 0.0;
      for (int p = 0; p < N; ++p) {
        const double r = B(p, k) - C(p, k) - mean;
        ss += r * r;
      }
      const double se = N > 1 ? std::sqrt(ss / (N - 1) / N) : kNaN;
      sol.mart_mean[static_cast<std::size_t>(i) * d + k] = mean;
      sol.mart_se[static_cast<std::size_t>(i) * d + k] = se;
      if (std::isfinite(se)) {
        const double floor_k = 1e-9 * (1.0 + babs);
        sol.martingale_statistic = std::max(
            sol.martingale_statistic, std::abs(mean) / (se + floor_k));
      }
    }

    const double ti = paths.grid.time(i);
    for (int p = 0; p < N; ++p) {
      for (int k = 0; k < d; ++k) cp[k] = C(p, k);
      xp = paths.state(p, i);
      if (mode == DriverMode::epsilon) {
        fval = c.driver(ti / eps, xp, cp);
      } else {
        fval = avg->driver_uncached(xp, cp);
      }
      const double dkv = paths.dvariation(p, i);
      v = cp + fval * dt;
      if (dkv > 0.0) {
        v += c.boundary_driver(ti, paths.state(p, i + 1), cp) * dkv;
      }
      const ResolventStep rs = composite_resolvent(phi, psi, v, dt, dkv);
      if (!rs.y.allFinite()) {
        throw numerical_error("solve: non-finite value at step " +
                              std::to_string(i));
      }
      sol.resolvent_exact = sol.resolvent_exact && rs.exact;
      double* yd = value_ptr(p, i);
      double* ud = sol.du.data() + (static_cast<std::size_t>(p) * n + i) * d;
      double* vd = sol.dv.data() + (static_cast<std::size_t>(p) * n + i) * d;
      for (int k = 0; k < d; ++k) {
        yd[k] = rs.y[k];
        ud[k] = rs.du[k];
        vd[k] = rs.dv[k];
      }
      supsq[p] = std::max(supsq[p], rs.y.squaredNorm());
      drift_acc[p] += rs.du.squaredNorm();
      if (dkv > 0.0) bnd_acc[p] += rs.dv.squaredNorm() / dkv;

      if (i == 0) {
        // Pre-resolvent pseudo-observation: the path's own Y_1 plus the same
        // driver terms, so its spread reflects the Monte Carlo uncertainty of
        // the start value (post-resolvent Y_0 is nearly constant by
        // construction since C_0 is a cross-path mean).
        what = fval * dt;
        if (dkv > 0.0) {
          what += c.boundary_driver(ti, paths.state(p, 1), cp) * dkv;
        }
        for (int k = 0; k < d; ++k) {
          sol.start_observations(p, k) = B(p, k) + what[k];
        }
      }
    }
  }

  sol.start_value = Vector::Zero(d);
  for (int p = 0; p < N; ++p) {
    const double* yd = value_ptr(p, 0);
    for (int k = 0; k < d; ++k) sol.start_value[k] += yd[k];
  }
  sol.start_value /= N;
  sol.start_stderr = Vector::Zero(d);
  if (N > 1) {
    const Eigen::RowVectorXd mu = sol.start_observations.colwise().mean();
    for (int k = 0; k < d; ++k) {
      double ss = 0.0;
      for (int p = 0; p < N; ++p) {
        const double r = sol.start_observations(p, k) - mu[k];
        ss += r * r;
      }
      sol.start_stderr[k] = std::sqrt(ss / (N - 1) / N);
    }
  } else {
    sol.start_stderr.setConstant(kNaN);
  }

  double sup_sum = 0.0, drift_sum = 0.0, bnd_sum = 0.0;
  for (int p = 0; p < N; ++p) {
    sup_sum += supsq[p];
    drift_sum += drift_acc[p];
    bnd_sum += bnd_acc[p];
  }
  sol.moments.sup_square = sup_sum / N;
  sol.moments.drift_energy = drift_sum / N / dt;
  sol.moments.boundary_energy = bnd_sum / N;
  return sol;
}

struct MartingaleCheck {
  double statistic = 0.0;
  bool flagged = false;  // statistic > 4: the regression looks biased
};

inline MartingaleCheck martingale_check(const BackwardSolution& sol) {
  return {sol.martingale_statistic, sol.martingale_statistic > 4.0};
}

// --- Paired epsilon / averaged experiment -------------------------------

// Condensed summary of one averaged-system run, cached per step count so
// several epsilon rows sharing a grid reuse one averaged simulation + solve.
struct AveragedRunSummary {
  Vector y_start;
  Vector y_stderr;
  Eigen::MatrixXd start_obs;  // n_paths x d
  Eigen::MatrixXd terminal;   // n_paths x m
  PathDiagnostics diag;
  double martingale_statistic = 0.0;
  BackwardMoments moments;
};

using AveragedCache = std::map<int, AveragedRunSummary>;

// One epsilon row of the convergence experiment.
struct PairOutcome {
  double epsilon = 0.0;
  TimeGrid grid;
  Vector y_eps;
  Vector y_bar;
  Vector y_eps_stderr;
  Vector y_bar_stderr;
  double error = 0.0;          // |y_eps - y_bar|
  double pooled_stderr = 0.0;  // sqrt(|se_eps|^2 + |se_bar|^2)
  double paired_stderr = 0.0;  // stderr of per-path observation differences
  std::vector<GapEstimate> gaps;
  PathDiagnostics diag_eps, diag_bar;
  double mart_eps = 0.0, mart_bar = 0.0;
  BackwardMoments moments_eps, moments_bar;
};

// Runs the epsilon system and the averaged system on the same grid with the
// same seed (common random numbers), solves both backward equations, and
// reports start-value error, weak gaps of the terminal state, and
// diagnostics.  `cache` (optional) reuses averaged runs across equal grids.
inline PairOutcome run_pair(const DomainSpec& dom, const CoefficientSet& c,
                            const AveragedCoefficients& avg,
                            const ConvexPotential& phi,
                            const ConvexPotential& psi, double epsilon,
                            const TimeGrid& grid, const Vector& x0,
                            int n_paths, const RegressionConfig& reg,
                            std::uint64_t seed,
                            const std::vector<TestFunctional>& functionals,
                            AveragedCache* cache = nullptr) {
  const int m = c.state_dim;
  const AveragedRunSummary* bar = nullptr;
  AveragedRunSummary local;
  if (cache) {
    auto it = cache->find(grid.n_steps);
    if (it != cache->end()) bar = &it->second;
  }
  if (!bar) {
    const PathEnsemble ens =
        simulate_averaged(dom, avg, grid, x0, n_paths, seed, false);
    BackwardSolution bsol =
        solve(ens, c, phi, psi, reg, DriverMode::averaged, &avg);
    local.y_start = bsol.start_value;
    local.y_stderr = bsol.start_stderr;
    local.start_obs = std::move(bsol.start_observations);
    local.terminal.resize(n_paths, m);
    for (int p = 0; p < n_paths; ++p) {
      const double* xs = ens.state_ptr(p, grid.n_steps);
      for (int k = 0; k < m; ++k) local.terminal(p, k) = xs[k];
    }
    local.diag = path_diagnostics(ens, dom, x0);
    local.martingale_statistic = bsol.martingale_statistic;
    local.moments = bsol.moments;
    if (cache) {
      bar = &(cache->emplace(grid.n_steps, std::move(local)).first->second);
    } else {
      bar = &local;
    }
  }

  const PathEnsemble ens =
      simulate(dom, c, epsilon, grid, x0, n_paths, seed, false);
  BackwardSolution esol = solve(ens, c, phi, psi, reg, DriverMode::epsilon);

  PairOutcome out;
  out.epsilon = epsilon;
  out.grid = grid;
  out.y_eps = esol.start_value;
  out.y_bar = bar->y_start;
  out.y_eps_stderr = esol.start_stderr;
  out.y_bar_stderr = bar->y_stderr;
  out.error = (out.y_eps - out.y_bar).norm();
  out.pooled_stderr = std::sqrt(out.y_eps_stderr.squaredNorm() +
                                out.y_bar_stderr.squaredNorm());
  const int d = c.value_dim;
  if (n_paths > 1) {
    Vector se = Vector::Zero(d);
    for (int k = 0; k < d; ++k) {
      double mean = 0.0;
      for (int p = 0; p < n_paths; ++p) {
        mean += esol.start_observations(p, k) - bar->start_obs(p, k);
      }
      mean /= n_paths;
      double ss = 0.0;
      for (int p = 0; p < n_paths; ++p) {
        const double r =
            esol.start_observations(p, k) - bar->start_obs(p, k) - mean;
        ss += r * r;
      }
      se[k] = std::sqrt(ss / (n_paths - 1) / n_paths);
    }
    out.paired_stderr = se.norm();
  } else {
    out.paired_stderr = kNaN;
  }

  const int last = grid.n_steps;
  std::vector<double> fa(n_paths), fb(n_paths);
  Vector xb(m);
  for (const auto& f : functionals) {
    for (int p = 0; p < n_paths; ++p) {
      fa[p] = f.fn(ens.state(p, last));
      for (int k = 0; k < m; ++k) xb[k] = bar->terminal(p, k);
      fb[p] = f.fn(xb);
    }
    out.gaps.push_back(detail::paired_gap(f.name, fa, fb));
  }

  out.diag_eps = path_diagnostics(ens, dom, x0);
  out.diag_bar = bar->diag;
  out.mart_eps = esol.martingale_statistic;
  out.mart_bar = bar->martingale_statistic;
  out.moments_eps = esol.moments;
  out.moments_bar = bar->moments;
  return out;
}

using ConvergenceTable = std::vector<PairOutcome>;

// The initial-value convergence experiment: for each epsilon (strictly
// decreasing) run the paired systems under a common seed and report
// |Y^eps_start - Ybar_start| next to its statistical resolution.
inline ConvergenceTable initial_value_convergence(
    const DomainSpec& dom, const CoefficientSet& c,
    const AveragedCoefficients& avg, const ConvexPotential& phi,
    const ConvexPotential& psi, double t, const Vector& x0, double T,
    const std::vector<double>& epsilons, const GridRule& rule, int n_paths,
    const RegressionConfig& reg, std::uint64_t seed,
    const std::vector<TestFunctional>& functionals = {}) {
  detail::require(!epsilons.empty(), "initial_value_convergence: no epsilons");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    detail::require(epsilons[i] > 0.0 && std::isfinite(epsilons[i]),
                    "initial_value_convergence: epsilons must be positive");
    detail::require(i == 0 || epsilons[i] < epsilons[i - 1],
                    "initial_value_convergence: epsilons must be strictly "
                    "decreasing");
  }
  detail::require(T > t, "initial_value_convergence: need T > t");

  ConvergenceTable table;
  AveragedCache cache;
  for (const double eps : epsilons) {
    const TimeGrid grid = rule.make(t, T, eps, c.period);
    table.push_back(run_pair(dom, c, avg, phi, psi, eps, grid, x0, n_paths,
                             reg, seed, functionals, &cache));
  }
  return table;
}

}  // namespace mvsde
