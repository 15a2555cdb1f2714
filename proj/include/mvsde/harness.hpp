#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/audit.hpp"
#include "mvsde/backward.hpp"
#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/forward.hpp"
#include "mvsde/models.hpp"
#include "mvsde/potential.hpp"

namespace mvsde {

// Declarative domain selection for configs and the CLI.
struct DomainConfig {
  std::string kind = "interval";  // "interval" | "ball" | "halfspace"
  int dimension = 1;              // ball / halfspace
  double radius = 1.0;            // ball
  double lo = -1.0, hi = 1.0;     // interval
};

inline DomainSpec make_domain(const DomainConfig& dc) {
  if (dc.kind == "interval") return make_interval_domain(dc.lo, dc.hi);
  if (dc.kind == "ball") return make_ball_domain(dc.dimension, dc.radius);
  if (dc.kind == "halfspace") return make_halfspace_domain(dc.dimension);
  throw std::invalid_argument("unknown domain kind: " + dc.kind);
}

// One experiment: which system, where it starts, which epsilons, and how hard
// to sample.  `x_grid`/`t_grid` are only consulted by the PDE-grid runner.
struct ExperimentConfig {
  DomainConfig domain;
  std::string model = "periodic_linear";
  ModelParams model_params;
  std::string potentials = "positive-y";
  double t = 0.0;
  double T = 1.0;
  std::vector<double> x0 = {0.1};
  std::vector<std::vector<double>> x_grid;  // pde-grid cells (default: {x0})
  std::vector<double> t_grid;               // pde-grid times (default: {t})
  std::vector<double> epsilons = {1.0, 0.1, 0.01};
  GridRule grid;
  int n_paths = 1000;
  RegressionConfig regression;
  std::uint64_t seed = 0;
  std::vector<std::string> functionals = {"x", "x2", "cos"};
  AveragingOptions averaging;
  long audit_budget = 2000;  // 0 disables the embedded assumption audit
  std::string csv_path;      // consumed by the CLI; empty = stdout only
  std::string json_path;
};

// Everything the runners need, constructed once from a config.
struct ExperimentSetup {
  DomainSpec domain;
  CoefficientSet coefficients;
  AveragedCoefficients averaged;
  ConvexPotential phi;
  ConvexPotential psi;
  Vector x0;
  std::vector<TestFunctional> functionals;
};

inline ExperimentSetup prepare(const ExperimentConfig& cfg) {
  detail::require(cfg.t >= 0.0 && cfg.T > cfg.t,
                  "ExperimentConfig: need T > t >= 0");
  detail::require(cfg.n_paths >= 1, "ExperimentConfig: n_paths must be >= 1");
  detail::require(!cfg.epsilons.empty(), "ExperimentConfig: empty epsilons");
  for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
    detail::require(cfg.epsilons[i] > 0.0,
                    "ExperimentConfig: epsilons must be positive");
    detail::require(i == 0 || cfg.epsilons[i] < cfg.epsilons[i - 1],
                    "ExperimentConfig: epsilons must be strictly decreasing");
  }
  validate(cfg.regression);

  ExperimentSetup s;
  s.domain = make_domain(cfg.domain);
  s.coefficients = make_coefficient_model(cfg.model, cfg.model_params);
  detail::require(s.coefficients.state_dim == s.domain.dimension,
                  "ExperimentConfig: model/domain dimension mismatch");
  s.averaged = make_averaged(s.coefficients, cfg.averaging);
  const PotentialPair pair =
      make_potential_pair(cfg.potentials, s.coefficients.value_dim);
  s.phi = pair.phi;
  s.psi = pair.psi;
  detail::require(static_cast<int>(cfg.x0.size()) == s.domain.dimension,
                  "ExperimentConfig: x0 dimension mismatch");
  s.x0.resize(s.domain.dimension);
  for (int k = 0; k < s.domain.dimension; ++k) s.x0[k] = cfg.x0[k];
  detail::require(is_in_closure(s.domain, s.x0),
                  "ExperimentConfig: x0 outside the domain closure");
  for (const auto& xg : cfg.x_grid) {
    detail::require(static_cast<int>(xg.size()) == s.domain.dimension,
                    "ExperimentConfig: x_grid point dimension mismatch");
    Vector xv(s.domain.dimension);
    for (int k = 0; k < s.domain.dimension; ++k) xv[k] = xg[k];
    detail::require(is_in_closure(s.domain, xv),
                    "ExperimentConfig: x_grid point outside the closure");
  }
  for (const double tg : cfg.t_grid) {
    detail::require(tg >= 0.0 && tg < cfg.T,
                    "ExperimentConfig: t_grid times must lie in [0, T)");
  }
  for (const auto& name : cfg.functionals) {
    s.functionals.push_back(make_functional(name));
  }
  return s;
}

namespace detail {

inline std::string fmt17(double v) {
  char b[48];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

inline std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

inline void hash_mix(std::uint64_t& h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= '|';
  h *= 1099511628211ull;
}

}  // namespace detail

// Stable fingerprint of the semantic experiment fields (output paths are
// excluded: they do not influence results).
inline std::string config_fingerprint(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  auto mixd = [&](double v) { detail::hash_mix(h, detail::fmt17(v)); };
  detail::hash_mix(h, c.domain.kind);
  detail::hash_mix(h, std::to_string(c.domain.dimension));
  mixd(c.domain.radius);
  mixd(c.domain.lo);
  mixd(c.domain.hi);
  detail::hash_mix(h, c.model);
  for (const auto& [k, v] : c.model_params) {
    detail::hash_mix(h, k);
    mixd(v);
  }
  detail::hash_mix(h, c.potentials);
  mixd(c.t);
  mixd(c.T);
  for (double v : c.x0) mixd(v);
  for (const auto& xg : c.x_grid) {
    for (double v : xg) mixd(v);
    detail::hash_mix(h, ";");
  }
  for (double v : c.t_grid) mixd(v);
  for (double v : c.epsilons) mixd(v);
  detail::hash_mix(h, c.grid.n_steps ? std::to_string(*c.grid.n_steps) : "auto");
  mixd(c.grid.steps_per_period);
  mixd(c.grid.dt_cap);
  detail::hash_mix(h, std::to_string(c.n_paths));
  detail::hash_mix(h, std::to_string(c.regression.degree));
  mixd(c.regression.ridge);
  detail::hash_mix(h, c.regression.boundary_indicator ? "ind" : "noind");
  detail::hash_mix(h, std::to_string(c.seed));
  for (const auto& f : c.functionals) detail::hash_mix(h, f);
  detail::hash_mix(h, std::to_string(c.averaging.panels));
  detail::hash_mix(h, std::to_string(c.averaging.nodes_per_panel));
  mixd(c.averaging.base_horizon);
  mixd(c.averaging.tolerance);
  detail::hash_mix(h, std::to_string(c.averaging.max_doublings));
  detail::hash_mix(h, std::to_string(c.audit_budget));
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

struct ReportMetadata {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string timestamp;  // isolated: never part of CSV or the config hash
  std::string model;
  std::string potentials;
  std::string method_tag;
};

inline std::string utc_timestamp_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct ReportRow {
  PairOutcome outcome;
  bool failed = false;
  std::string failure;
};

namespace detail {

inline void csv_vector_header(std::string& h, const std::string& base, int d) {
  if (d == 1) {
    h += "," + base;
  } else {
    for (int k = 0; k < d; ++k) h += "," + base + "_" + std::to_string(k);
  }
}

inline void csv_vector_values(std::string& r, const Vector& v, int d) {
  for (int k = 0; k < d; ++k) r += "," + fmt17(k < v.size() ? v[k] : kNaN);
}

inline std::string convergence_csv_header(
    int d, const std::vector<std::string>& functional_names) {
  std::string h = "epsilon,n_steps,dt";
  csv_vector_header(h, "y_eps", d);
  csv_vector_header(h, "y_bar", d);
  h += ",error,pooled_stderr,paired_stderr";
  csv_vector_header(h, "y_eps_stderr", d);
  csv_vector_header(h, "y_bar_stderr", d);
  for (const auto& f : functional_names) {
    h += ",gap_" + f + ",gap_" + f + "_pooled_se,gap_" + f + "_paired_se";
  }
  h += ",mart_eps,mart_bar,mono_eps,mono_bar,kvar_eps,kvar_bar";
  h += ",reflect_eps,reflect_bar,supy2_eps,supy2_bar";
  h += ",du_energy_eps,dv_energy_eps,status,note";
  return h;
}

inline std::string convergence_csv_row(
    const ReportRow& row, int d,
    const std::vector<std::string>& functional_names) {
  const PairOutcome& o = row.outcome;
  std::string r = fmt17(o.epsilon);
  r += "," + std::to_string(o.grid.n_steps) + "," + fmt17(o.grid.dt());
  csv_vector_values(r, o.y_eps, d);
  csv_vector_values(r, o.y_bar, d);
  r += "," + fmt17(o.error) + "," + fmt17(o.pooled_stderr) + "," +
       fmt17(o.paired_stderr);
  csv_vector_values(r, o.y_eps_stderr, d);
  csv_vector_values(r, o.y_bar_stderr, d);
  for (std::size_t j = 0; j < functional_names.size(); ++j) {
    if (j < o.gaps.size()) {
      r += "," + fmt17(o.gaps[j].gap) + "," + fmt17(o.gaps[j].pooled_stderr) +
           "," + fmt17(o.gaps[j].paired_stderr);
    } else {
      r += "," + fmt17(kNaN) + "," + fmt17(kNaN) + "," + fmt17(kNaN);
    }
  }
  r += "," + fmt17(o.mart_eps) + "," + fmt17(o.mart_bar);
  r += "," + fmt17(o.diag_eps.monotonicity_min) + "," +
       fmt17(o.diag_bar.monotonicity_min);
  r += "," + fmt17(o.diag_eps.mean_variation) + "," +
       fmt17(o.diag_bar.mean_variation);
  r += "," + fmt17(o.diag_eps.reflection_fraction) + "," +
       fmt17(o.diag_bar.reflection_fraction);
  r += "," + fmt17(o.moments_eps.sup_square) + "," +
       fmt17(o.moments_bar.sup_square);
  r += "," + fmt17(o.moments_eps.drift_energy) + "," +
       fmt17(o.moments_eps.boundary_energy);
  r += row.failed ? ",failed," + csv_safe(row.failure) : ",ok,";
  return r;
}

}  // namespace detail

struct ConvergenceReport {
  ReportMetadata meta;
  int value_dim = 1;
  std::vector<std::string> functional_names;
  std::vector<ReportRow> rows;  // epsilon descending
  std::vector<std::string> audit_warnings;

  std::string csv() const {
    std::string out =
        detail::convergence_csv_header(value_dim, functional_names) + "\n";
    for (const auto& row : rows) {
      out += detail::convergence_csv_row(row, value_dim, functional_names) +
             "\n";
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> audit_warning_lines(const AuditReport& rep) {
  std::vector<std::string> out;
  for (const auto& e : rep.entries) {
    if (!e.satisfied) {
      out.push_back("audit: " + e.name + " observed=" + fmt17(e.observed) +
                    (std::isnan(e.declared)
                         ? std::string()
                         : " declared=" + fmt17(e.declared)));
    }
  }
  return out;
}

}  // namespace detail

// The epsilon-convergence experiment: audits the model (warnings embedded in
// the report), then runs the common-seed pair per epsilon.  A numerical
// failure aborts only its row.
inline ConvergenceReport run_convergence(const ExperimentConfig& cfg) {
  const ExperimentSetup s = prepare(cfg);

  ConvergenceReport rep;
  rep.meta.config_hash = config_fingerprint(cfg);
  rep.meta.seed = cfg.seed;
  rep.meta.version = library_version();
  rep.meta.timestamp = utc_timestamp_now();
  rep.meta.model = s.coefficients.name;
  rep.meta.potentials = cfg.potentials;
  rep.meta.method_tag = s.averaged.method_tag();
  rep.value_dim = s.coefficients.value_dim;
  rep.functional_names = cfg.functionals;

  if (cfg.audit_budget > 0) {
    AuditOptions opt;
    opt.domain = &s.domain;
    const AuditReport audit = audit_assumptions(
        s.coefficients, s.phi, s.psi, cfg.audit_budget, cfg.seed, opt);
    rep.audit_warnings = detail::audit_warning_lines(audit);
  }

  AveragedCache cache;
  for (const double eps : cfg.epsilons) {
    ReportRow row;
    row.outcome.epsilon = eps;
    try {
      const TimeGrid grid =
          cfg.grid.make(cfg.t, cfg.T, eps, s.coefficients.period);
      row.outcome =
          run_pair(s.domain, s.coefficients, s.averaged, s.phi, s.psi, eps,
                   grid, s.x0, cfg.n_paths, cfg.regression, cfg.seed,
                   s.functionals, &cache);
    } catch (const numerical_error& e) {
      row.failed = true;
      row.failure = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// --- PDE grid ------------------------------------------------------------

struct PdeCell {
  double t = 0.0;
  Vector x;
  std::vector<ReportRow> rows;  // one per epsilon, descending
};

struct PdeGridReport {
  ReportMetadata meta;
  int value_dim = 1;
  int state_dim = 1;
  std::vector<double> epsilons;
  std::vector<PdeCell> cells;
  // max over grid cells of |u_eps - u_bar|, one entry per epsilon (NaN when
  // every cell failed for that epsilon).
  std::vector<double> sup_gaps;

  std::string csv() const {
    std::string out = "t";
    if (state_dim == 1) {
      out += ",x";
    } else {
      for (int k = 0; k < state_dim; ++k) out += ",x_" + std::to_string(k);
    }
    out += ",epsilon,n_steps";
    detail::csv_vector_header(out, "u_eps", value_dim);
    detail::csv_vector_header(out, "u_bar", value_dim);
    out += ",error,pooled_stderr,paired_stderr,status,note\n";
    for (const auto& cell : cells) {
      for (const auto& row : rows_of(cell)) {
        out += detail::fmt17(cell.t);
        for (int k = 0; k < state_dim; ++k) {
          out += "," + detail::fmt17(cell.x[k]);
        }
        const PairOutcome& o = row.outcome;
        out += "," + detail::fmt17(o.epsilon) + "," +
               std::to_string(o.grid.n_steps);
        detail::csv_vector_values(out, o.y_eps, value_dim);
        detail::csv_vector_values(out, o.y_bar, value_dim);
        out += "," + detail::fmt17(o.error) + "," +
               detail::fmt17(o.pooled_stderr) + "," +
               detail::fmt17(o.paired_stderr);
        out += row.failed ? ",failed," + detail::csv_safe(row.failure) : ",ok,";
        out += "\n";
      }
    }
    return out;
  }

 private:
  static const std::vector<ReportRow>& rows_of(const PdeCell& c) {
    return c.rows;
  }
};

// Evaluates the start value of both systems on a (t, x) grid: u_eps(t,x) and
// u_bar(t,x) per cell and epsilon, plus the per-epsilon sup-norm gap.  Each
// cell shares averaged runs across epsilons with equal step counts.
inline PdeGridReport run_pde_grid(const ExperimentConfig& cfg) {
  const ExperimentSetup s = prepare(cfg);

  PdeGridReport rep;
  rep.meta.config_hash = config_fingerprint(cfg);
  rep.meta.seed = cfg.seed;
  rep.meta.version = library_version();
  rep.meta.timestamp = utc_timestamp_now();
  rep.meta.model = s.coefficients.name;
  rep.meta.potentials = cfg.potentials;
  rep.meta.method_tag = s.averaged.method_tag();
  rep.value_dim = s.coefficients.value_dim;
  rep.state_dim = s.coefficients.state_dim;
  rep.epsilons = cfg.epsilons;

  std::vector<double> tgrid = cfg.t_grid.empty() ? std::vector<double>{cfg.t}
                                                 : cfg.t_grid;
  std::vector<Vector> xgrid;
  if (cfg.x_grid.empty()) {
    xgrid.push_back(s.x0);
  } else {
    for (const auto& xg : cfg.x_grid) {
      Vector xv(s.domain.dimension);
      for (int k = 0; k < s.domain.dimension; ++k) xv[k] = xg[k];
      xgrid.push_back(xv);
    }
  }

  rep.sup_gaps.assign(cfg.epsilons.size(), kNaN);
  for (const double tc : tgrid) {
    for (const Vector& xc : xgrid) {
      PdeCell cell;
      cell.t = tc;
      cell.x = xc;
      AveragedCache cache;  // averaged runs depend on the cell's start
      for (std::size_t j = 0; j < cfg.epsilons.size(); ++j) {
        const double eps = cfg.epsilons[j];
        ReportRow row;
        row.outcome.epsilon = eps;
        try {
          const TimeGrid grid =
              cfg.grid.make(tc, cfg.T, eps, s.coefficients.period);
          row.outcome = run_pair(s.domain, s.coefficients, s.averaged, s.phi,
                                 s.psi, eps, grid, xc, cfg.n_paths,
                                 cfg.regression, cfg.seed, {}, &cache);
          rep.sup_gaps[j] = std::isnan(rep.sup_gaps[j])
                                ? row.outcome.error
                                : std::max(rep.sup_gaps[j], row.outcome.error);
        } catch (const numerical_error& e) {
          row.failed = true;
          row.failure = e.what();
        }
        cell.rows.push_back(std::move(row));
      }
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

}  // namespace mvsde
