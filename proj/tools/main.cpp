// Command-line driver: forward simulation, backward solves, convergence
// sweeps, PDE-grid evaluation, and assumption audits over JSON configs.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvsde/config_json.hpp"
#include "mvsde/mvsde.hpp"

namespace {

using namespace mvsde;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << content;
  if (!out) throw std::invalid_argument("write failed: " + path);
}

ExperimentConfig load_config(const std::string& path) {
  return parse_experiment_config(read_file(path));
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse number: " + tok);
    }
  }
  return out;
}

void apply_params(ExperimentConfig& cfg, const std::vector<std::string>& kvs) {
  for (const auto& kv : kvs) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos || pos == 0) {
      throw std::invalid_argument("expected key=value parameter, got: " + kv);
    }
    try {
      cfg.model_params[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse parameter value in: " + kv);
    }
  }
}

ReportMetadata make_metadata(const ExperimentConfig& cfg,
                             const AveragedCoefficients& avg,
                             const std::string& model_name) {
  ReportMetadata meta;
  meta.config_hash = config_fingerprint(cfg);
  meta.seed = cfg.seed;
  meta.version = library_version();
  meta.timestamp = utc_timestamp_now();
  meta.model = model_name;
  meta.potentials = cfg.potentials;
  meta.method_tag = avg.method_tag();
  return meta;
}

void emit(const std::string& content, const std::string& path) {
  if (path.empty()) {
    std::cout << content;
  } else {
    write_file(path, content);
    std::cerr << "wrote " << path << "\n";
  }
}

// --- simulate-forward -----------------------------------------------------

struct ForwardArgs {
  std::string config_path;
  std::string model;
  std::vector<std::string> params;
  std::string domain_kind;
  int dimension = 0;
  double radius = 0.0, lo = 0.0, hi = 0.0;
  double epsilon = 1.0;
  bool averaged = false;
  double t = -1.0, T = -1.0;
  int steps = 0;
  int paths = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string x0;
  std::string out_csv;
  std::string dump_path;
};

int run_simulate_forward(const ForwardArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = load_config(a.config_path);
  if (!a.model.empty()) cfg.model = a.model;
  apply_params(cfg, a.params);
  if (!a.domain_kind.empty()) cfg.domain.kind = a.domain_kind;
  if (a.dimension > 0) cfg.domain.dimension = a.dimension;
  if (a.radius > 0.0) cfg.domain.radius = a.radius;
  if (a.lo != 0.0 || a.hi != 0.0) {
    cfg.domain.lo = a.lo;
    cfg.domain.hi = a.hi;
  }
  if (a.t >= 0.0) cfg.t = a.t;
  if (a.T > 0.0) cfg.T = a.T;
  if (a.steps > 0) cfg.grid.n_steps = a.steps;
  if (a.paths > 0) cfg.n_paths = a.paths;
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.x0.empty()) cfg.x0 = parse_double_list(a.x0);
  cfg.epsilons = {a.epsilon};

  const ExperimentSetup s = prepare(cfg);
  const TimeGrid grid =
      cfg.grid.make(cfg.t, cfg.T, a.averaged ? 1.0 : a.epsilon,
                    a.averaged ? std::nullopt : s.coefficients.period);
  const PathEnsemble ens =
      a.averaged
          ? simulate_averaged(s.domain, s.averaged, grid, s.x0, cfg.n_paths,
                              cfg.seed, /*keep_increments=*/false)
          : simulate(s.domain, s.coefficients, a.epsilon, grid, s.x0,
                     cfg.n_paths, cfg.seed, /*keep_increments=*/false);

  const int m = ens.dim;
  std::string csv = "step,time";
  detail::csv_vector_header(csv, "mean_x", m);
  csv += ",mean_kvar,reflect_frac\n";
  for (int i = 0; i <= grid.n_steps; ++i) {
    csv += std::to_string(i) + "," + detail::fmt17(grid.time(i));
    for (int k = 0; k < m; ++k) {
      double mean = 0.0;
      for (int p = 0; p < ens.n_paths; ++p) mean += ens.state(p, i)[k];
      csv += "," + detail::fmt17(mean / ens.n_paths);
    }
    double kvar = 0.0;
    double refl = 0.0;
    for (int p = 0; p < ens.n_paths; ++p) {
      kvar += ens.variation_at(p, i);
      if (i > 0 && ens.dvariation(p, i - 1) > 0.0) refl += 1.0;
    }
    csv += "," + detail::fmt17(kvar / ens.n_paths) + "," +
           detail::fmt17(i > 0 ? refl / ens.n_paths : 0.0) + "\n";
  }
  emit(csv, a.out_csv);

  if (!a.dump_path.empty()) {
    write_path_dump(ens, a.dump_path);
    std::cerr << "wrote " << a.dump_path << "\n";
  }

  const PathDiagnostics diag = path_diagnostics(ens, s.domain, s.x0);
  std::cerr << "paths=" << ens.n_paths << " steps=" << grid.n_steps
            << " dt=" << detail::fmt17(grid.dt())
            << " mean_kvar=" << detail::fmt17(diag.mean_variation)
            << " reflect_frac=" << detail::fmt17(diag.reflection_fraction)
            << " mono_min=" << detail::fmt17(diag.monotonicity_min) << "\n";
  return 0;
}

// --- solve-bsvi -------------------------------------------------------------

struct SolveArgs {
  std::string config_path;
  double epsilon = 1.0;
  bool averaged = false;
  std::string dump_path;
  double dump_t = 0.0;
  std::string out_json;
  std::string out_csv;
};

int run_solve_bsvi(const SolveArgs& a) {
  ExperimentConfig cfg = load_config(a.config_path);
  cfg.epsilons = {a.epsilon};
  const ExperimentSetup s = prepare(cfg);

  PathEnsemble ens;
  if (!a.dump_path.empty()) {
    ens = read_path_dump(a.dump_path, a.dump_t);
    detail::require(ens.dim == s.coefficients.state_dim,
                    "dump dimension does not match the model");
    ens.epsilon =
        a.averaged ? std::optional<double>{} : std::optional<double>{a.epsilon};
  } else {
    const TimeGrid grid =
        cfg.grid.make(cfg.t, cfg.T, a.averaged ? 1.0 : a.epsilon,
                      a.averaged ? std::nullopt : s.coefficients.period);
    ens = a.averaged
              ? simulate_averaged(s.domain, s.averaged, grid, s.x0,
                                  cfg.n_paths, cfg.seed, false)
              : simulate(s.domain, s.coefficients, a.epsilon, grid, s.x0,
                         cfg.n_paths, cfg.seed, false);
  }

  const BackwardSolution sol =
      solve(ens, s.coefficients, s.phi, s.psi, cfg.regression,
            a.averaged ? DriverMode::averaged : DriverMode::epsilon,
            a.averaged ? &s.averaged : nullptr);

  const ReportMetadata meta = make_metadata(cfg, s.averaged,
                                            s.coefficients.name);
  emit(backward_summary_json(sol, meta), a.out_json);

  if (!a.out_csv.empty()) {
    const int d = sol.value_dim;
    std::string csv = "step,time";
    detail::csv_vector_header(csv, "mean_y", d);
    detail::csv_vector_header(csv, "mean_du", d);
    detail::csv_vector_header(csv, "mean_dv", d);
    csv += "\n";
    for (int i = 0; i <= sol.n_steps; ++i) {
      csv += std::to_string(i) + "," + detail::fmt17(ens.grid.time(i));
      Vector my = Vector::Zero(d), mu = Vector::Zero(d), mv = Vector::Zero(d);
      for (int p = 0; p < sol.n_paths; ++p) {
        my += sol.value(p, i);
        if (i < sol.n_steps) {
          mu += sol.du_at(p, i);
          mv += sol.dv_at(p, i);
        }
      }
      for (int k = 0; k < d; ++k) csv += "," + detail::fmt17(my[k] / sol.n_paths);
      for (int k = 0; k < d; ++k) {
        csv += "," + detail::fmt17(i < sol.n_steps ? mu[k] / sol.n_paths : kNaN);
      }
      for (int k = 0; k < d; ++k) {
        csv += "," + detail::fmt17(i < sol.n_steps ? mv[k] / sol.n_paths : kNaN);
      }
      csv += "\n";
    }
    write_file(a.out_csv, csv);
    std::cerr << "wrote " << a.out_csv << "\n";
  }
  return 0;
}

// --- homogenize / pde-grid --------------------------------------------------

int run_homogenize_cmd(const std::string& config_path, std::string out_csv,
                       std::string out_json) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_csv.empty()) cfg.csv_path = out_csv;
  if (!out_json.empty()) cfg.json_path = out_json;

  const ConvergenceReport rep = run_convergence(cfg);
  for (const auto& w : rep.audit_warnings) std::cerr << w << "\n";
  emit(rep.csv(), cfg.csv_path);
  if (!cfg.json_path.empty()) {
    write_file(cfg.json_path, convergence_report_json(rep));
    std::cerr << "wrote " << cfg.json_path << "\n";
  }
  for (const auto& row : rep.rows) {
    if (row.failed) {
      std::cerr << "row eps=" << detail::fmt17(row.outcome.epsilon)
                << " failed: " << row.failure << "\n";
    }
  }
  return 0;
}

int run_pde_grid_cmd(const std::string& config_path, std::string out_csv,
                     std::string out_json) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_csv.empty()) cfg.csv_path = out_csv;
  if (!out_json.empty()) cfg.json_path = out_json;

  const PdeGridReport rep = run_pde_grid(cfg);
  emit(rep.csv(), cfg.csv_path);
  if (!cfg.json_path.empty()) {
    write_file(cfg.json_path, pde_report_json(rep));
    std::cerr << "wrote " << cfg.json_path << "\n";
  }
  for (std::size_t j = 0; j < rep.epsilons.size(); ++j) {
    std::cerr << "sup_gap[eps=" << detail::fmt17(rep.epsilons[j])
              << "] = " << detail::fmt17(rep.sup_gaps[j]) << "\n";
  }
  return 0;
}

// --- audit-assumptions --------------------------------------------------------

struct AuditArgs {
  std::string config_path;
  std::string model;
  std::vector<std::string> params;
  std::string potentials;
  long budget = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_json;
};

int run_audit_cmd(const AuditArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = load_config(a.config_path);
  if (!a.model.empty()) cfg.model = a.model;
  apply_params(cfg, a.params);
  if (!a.potentials.empty()) cfg.potentials = a.potentials;
  if (a.budget > 0) cfg.audit_budget = a.budget;
  if (a.seed_set) cfg.seed = a.seed;
  if (cfg.audit_budget <= 0) cfg.audit_budget = 2000;

  const DomainSpec dom = make_domain(cfg.domain);
  const CoefficientSet c = make_coefficient_model(cfg.model, cfg.model_params);
  detail::require(c.state_dim == dom.dimension,
                  "model/domain dimension mismatch");
  const PotentialPair pair = make_potential_pair(cfg.potentials, c.value_dim);

  AuditOptions opt;
  opt.domain = &dom;
  const AuditReport rep = audit_assumptions(c, pair.phi, pair.psi,
                                            cfg.audit_budget, cfg.seed, opt);
  std::cout << rep.summary();
  if (!a.out_json.empty()) {
    write_file(a.out_json, audit_report_json(rep));
    std::cerr << "wrote " << a.out_json << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Reflected multivalued SDE simulation, backward variational-inequality "
      "solving, and homogenization experiments"};
  app.require_subcommand(1);

  ForwardArgs fa;
  auto* sf = app.add_subcommand("simulate-forward",
                                "Simulate the reflected forward system");
  sf->add_option("--config", fa.config_path, "JSON experiment config");
  sf->add_option("--model", fa.model, "coefficient model name");
  sf->add_option("--param", fa.params, "model parameter key=value");
  sf->add_option("--domain", fa.domain_kind, "interval | ball | halfspace");
  sf->add_option("--dim", fa.dimension, "domain dimension (ball/halfspace)");
  sf->add_option("--radius", fa.radius, "ball radius");
  sf->add_option("--lo", fa.lo, "interval lower end");
  sf->add_option("--hi", fa.hi, "interval upper end");
  sf->add_option("--epsilon", fa.epsilon, "time-scale parameter");
  sf->add_flag("--averaged", fa.averaged, "simulate the averaged system");
  sf->add_option("--t", fa.t, "start time");
  sf->add_option("--T", fa.T, "end time");
  sf->add_option("--steps", fa.steps, "number of time steps (0 = automatic)");
  sf->add_option("--paths", fa.paths, "number of Monte Carlo paths");
  auto* fseed = sf->add_option("--seed", fa.seed, "master seed");
  sf->add_option("--x0", fa.x0, "start point, comma-separated");
  sf->add_option("--out", fa.out_csv, "summary CSV path (default: stdout)");
  sf->add_option("--dump", fa.dump_path, "binary path-dump output");
  sf->callback([&]() {
    fa.seed_set = fseed->count() > 0;
    run_simulate_forward(fa);
  });

  SolveArgs sa;
  auto* sb = app.add_subcommand(
      "solve-bsvi", "Solve the backward variational inequality along paths");
  sb->add_option("--config", sa.config_path, "JSON experiment config")
      ->required();
  sb->add_option("--epsilon", sa.epsilon, "time-scale parameter");
  sb->add_flag("--averaged", sa.averaged, "solve against the averaged system");
  sb->add_option("--dump", sa.dump_path, "consume a forward path dump");
  sb->add_option("--dump-t", sa.dump_t, "start time of the dump grid");
  sb->add_option("--out-json", sa.out_json, "summary JSON path");
  sb->add_option("--out-csv", sa.out_csv, "per-step mean CSV path");
  sb->callback([&]() { run_solve_bsvi(sa); });

  std::string h_config, h_csv, h_json;
  auto* hg = app.add_subcommand(
      "homogenize", "Convergence sweep of the start value over epsilons");
  hg->add_option("--config", h_config, "JSON experiment config")->required();
  hg->add_option("--out-csv", h_csv, "CSV output path (overrides config)");
  hg->add_option("--out-json", h_json, "JSON report path (overrides config)");
  hg->callback([&]() { run_homogenize_cmd(h_config, h_csv, h_json); });

  std::string p_config, p_csv, p_json;
  auto* pg = app.add_subcommand(
      "pde-grid", "Evaluate start values on a (t, x) grid with sup-norm gaps");
  pg->add_option("--config", p_config, "JSON experiment config")->required();
  pg->add_option("--out-csv", p_csv, "CSV output path (overrides config)");
  pg->add_option("--out-json", p_json, "JSON report path (overrides config)");
  pg->callback([&]() { run_pde_grid_cmd(p_config, p_csv, p_json); });

  AuditArgs aa;
  auto* au = app.add_subcommand("audit-assumptions",
                                "Sample-based check of model assumptions");
  au->add_option("--config", aa.config_path, "JSON experiment config");
  au->add_option("--model", aa.model, "coefficient model name");
  au->add_option("--param", aa.params, "model parameter key=value");
  au->add_option("--potentials", aa.potentials, "potential pair name");
  au->add_option("--budget", aa.budget, "sample budget");
  auto* aseed = au->add_option("--seed", aa.seed, "master seed");
  au->add_option("--out-json", aa.out_json, "JSON report path");
  au->callback([&]() {
    aa.seed_set = aseed->count() > 0;
    run_audit_cmd(aa);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const mvsde::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
