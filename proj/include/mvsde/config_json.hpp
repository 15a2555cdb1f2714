#pragma once

// JSON bindings for the experiment config and reports.  Kept separate from
// the core headers so the library itself has no JSON dependency; include
// this from executables (requires nlohmann/json on the include path).

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/audit.hpp"
#include "mvsde/backward.hpp"
#include "mvsde/harness.hpp"

namespace mvsde {

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + where + " must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key \"" + it.key() +
                                  "\" in " + where);
    }
  }
}

template <typename T>
T get_field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline std::vector<double> get_vector(const json& j, const char* key,
                                      std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::vector<double>>();
}

}  // namespace detail

// Parses an ExperimentConfig from JSON text.  Unknown keys are rejected; any
// JSON error is reported as std::invalid_argument (validation failure).
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  using nlohmann::json;
  ExperimentConfig cfg;
  try {
    const json j = json::parse(text);
    detail::check_keys(
        j,
        {"domain", "model", "model_params", "potentials", "t", "T", "x0",
         "x_grid", "t_grid", "epsilons", "grid", "n_paths", "regression",
         "seed", "functionals", "averaging", "audit_budget", "csv_path",
         "json_path"},
        "top level");

    if (j.contains("domain")) {
      const json& d = j.at("domain");
      detail::check_keys(d, {"kind", "dimension", "radius", "lo", "hi"},
                         "domain");
      cfg.domain.kind = detail::get_field<std::string>(d, "kind", "interval");
      cfg.domain.dimension = detail::get_field<int>(d, "dimension", 1);
      cfg.domain.radius = detail::get_field<double>(d, "radius", 1.0);
      cfg.domain.lo = detail::get_field<double>(d, "lo", -1.0);
      cfg.domain.hi = detail::get_field<double>(d, "hi", 1.0);
    }
    cfg.model = detail::get_field<std::string>(j, "model", cfg.model);
    if (j.contains("model_params")) {
      const json& p = j.at("model_params");
      if (!p.is_object()) {
        throw std::invalid_argument("config: model_params must be an object");
      }
      for (auto it = p.begin(); it != p.end(); ++it) {
        cfg.model_params[it.key()] = it.value().get<double>();
      }
    }
    cfg.potentials =
        detail::get_field<std::string>(j, "potentials", cfg.potentials);
    cfg.t = detail::get_field<double>(j, "t", cfg.t);
    cfg.T = detail::get_field<double>(j, "T", cfg.T);
    cfg.x0 = detail::get_vector(j, "x0", cfg.x0);
    if (j.contains("x_grid")) {
      cfg.x_grid = j.at("x_grid").get<std::vector<std::vector<double>>>();
    }
    cfg.t_grid = detail::get_vector(j, "t_grid", cfg.t_grid);
    cfg.epsilons = detail::get_vector(j, "epsilons", cfg.epsilons);
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      detail::check_keys(g, {"n_steps", "steps_per_period", "dt_cap"}, "grid");
      if (g.contains("n_steps")) cfg.grid.n_steps = g.at("n_steps").get<int>();
      cfg.grid.steps_per_period = detail::get_field<double>(
          g, "steps_per_period", cfg.grid.steps_per_period);
      cfg.grid.dt_cap = detail::get_field<double>(g, "dt_cap", cfg.grid.dt_cap);
    }
    cfg.n_paths = detail::get_field<int>(j, "n_paths", cfg.n_paths);
    if (j.contains("regression")) {
      const json& r = j.at("regression");
      detail::check_keys(r, {"degree", "ridge", "boundary_indicator"},
                         "regression");
      cfg.regression.degree =
          detail::get_field<int>(r, "degree", cfg.regression.degree);
      cfg.regression.ridge =
          detail::get_field<double>(r, "ridge", cfg.regression.ridge);
      cfg.regression.boundary_indicator = detail::get_field<bool>(
          r, "boundary_indicator", cfg.regression.boundary_indicator);
    }
    cfg.seed = detail::get_field<std::uint64_t>(j, "seed", cfg.seed);
    if (j.contains("functionals")) {
      cfg.functionals = j.at("functionals").get<std::vector<std::string>>();
    }
    if (j.contains("averaging")) {
      const json& a = j.at("averaging");
      detail::check_keys(a,
                         {"panels", "nodes_per_panel", "base_horizon",
                          "tolerance", "max_doublings", "memo_capacity"},
                         "averaging");
      cfg.averaging.panels =
          detail::get_field<int>(a, "panels", cfg.averaging.panels);
      cfg.averaging.nodes_per_panel = detail::get_field<int>(
          a, "nodes_per_panel", cfg.averaging.nodes_per_panel);
      cfg.averaging.base_horizon = detail::get_field<double>(
          a, "base_horizon", cfg.averaging.base_horizon);
      cfg.averaging.tolerance =
          detail::get_field<double>(a, "tolerance", cfg.averaging.tolerance);
      cfg.averaging.max_doublings = detail::get_field<int>(
          a, "max_doublings", cfg.averaging.max_doublings);
      cfg.averaging.memo_capacity = detail::get_field<std::size_t>(
          a, "memo_capacity", cfg.averaging.memo_capacity);
    }
    cfg.audit_budget =
        detail::get_field<long>(j, "audit_budget", cfg.audit_budget);
    cfg.csv_path = detail::get_field<std::string>(j, "csv_path", "");
    cfg.json_path = detail::get_field<std::string>(j, "json_path", "");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

// Round-trip serialization of a config (used by tests and `--emit-config`).
inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["domain"] = {{"kind", c.domain.kind},
                 {"dimension", c.domain.dimension},
                 {"radius", c.domain.radius},
                 {"lo", c.domain.lo},
                 {"hi", c.domain.hi}};
  j["model"] = c.model;
  if (!c.model_params.empty()) {
    nlohmann::json p;
    for (const auto& [k, v] : c.model_params) p[k] = v;
    j["model_params"] = p;
  }
  j["potentials"] = c.potentials;
  j["t"] = c.t;
  j["T"] = c.T;
  j["x0"] = c.x0;
  if (!c.x_grid.empty()) j["x_grid"] = c.x_grid;
  if (!c.t_grid.empty()) j["t_grid"] = c.t_grid;
  j["epsilons"] = c.epsilons;
  nlohmann::json g;
  if (c.grid.n_steps) g["n_steps"] = *c.grid.n_steps;
  g["steps_per_period"] = c.grid.steps_per_period;
  g["dt_cap"] = c.grid.dt_cap;
  j["grid"] = g;
  j["n_paths"] = c.n_paths;
  j["regression"] = {{"degree", c.regression.degree},
                     {"ridge", c.regression.ridge},
                     {"boundary_indicator", c.regression.boundary_indicator}};
  j["seed"] = c.seed;
  j["functionals"] = c.functionals;
  j["averaging"] = {{"panels", c.averaging.panels},
                    {"nodes_per_panel", c.averaging.nodes_per_panel},
                    {"base_horizon", c.averaging.base_horizon},
                    {"tolerance", c.averaging.tolerance},
                    {"max_doublings", c.averaging.max_doublings},
                    {"memo_capacity", c.averaging.memo_capacity}};
  j["audit_budget"] = c.audit_budget;
  if (!c.csv_path.empty()) j["csv_path"] = c.csv_path;
  if (!c.json_path.empty()) j["json_path"] = c.json_path;
  return j;
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline nlohmann::json metadata_json(const ReportMetadata& m) {
  return {{"config_hash", m.config_hash}, {"seed", m.seed},
          {"version", m.version},         {"timestamp", m.timestamp},
          {"model", m.model},             {"potentials", m.potentials},
          {"method_tag", m.method_tag}};
}

inline nlohmann::json diagnostics_json(const PathDiagnostics& d) {
  return {{"monotonicity_min", d.monotonicity_min},
          {"sup_square_moment", d.sup_square_moment},
          {"mean_variation", d.mean_variation},
          {"reflection_fraction", d.reflection_fraction},
          {"worst_boundary_level", d.worst_boundary_level}};
}

inline nlohmann::json moments_json(const BackwardMoments& m) {
  return {{"sup_square", m.sup_square},
          {"drift_energy", m.drift_energy},
          {"boundary_energy", m.boundary_energy}};
}

inline nlohmann::json row_json(const ReportRow& row) {
  const PairOutcome& o = row.outcome;
  nlohmann::json r;
  r["epsilon"] = o.epsilon;
  r["status"] = row.failed ? "failed" : "ok";
  if (row.failed) {
    r["note"] = row.failure;
    return r;
  }
  r["n_steps"] = o.grid.n_steps;
  r["dt"] = o.grid.dt();
  r["y_eps"] = to_std(o.y_eps);
  r["y_bar"] = to_std(o.y_bar);
  r["error"] = o.error;
  r["pooled_stderr"] = o.pooled_stderr;
  r["paired_stderr"] = o.paired_stderr;
  r["y_eps_stderr"] = to_std(o.y_eps_stderr);
  r["y_bar_stderr"] = to_std(o.y_bar_stderr);
  nlohmann::json gaps = nlohmann::json::array();
  for (const auto& g : o.gaps) {
    gaps.push_back({{"name", g.name},
                    {"gap", g.gap},
                    {"pooled_stderr", g.pooled_stderr},
                    {"paired_stderr", g.paired_stderr}});
  }
  r["gaps"] = gaps;
  r["martingale"] = {{"eps", o.mart_eps}, {"bar", o.mart_bar}};
  r["diagnostics"] = {{"eps", diagnostics_json(o.diag_eps)},
                      {"bar", diagnostics_json(o.diag_bar)}};
  r["moments"] = {{"eps", moments_json(o.moments_eps)},
                  {"bar", moments_json(o.moments_bar)}};
  return r;
}

}  // namespace detail

inline std::string convergence_report_json(const ConvergenceReport& rep) {
  nlohmann::json j;
  j["metadata"] = detail::metadata_json(rep.meta);
  j["value_dim"] = rep.value_dim;
  j["functionals"] = rep.functional_names;
  j["audit_warnings"] = rep.audit_warnings;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : rep.rows) rows.push_back(detail::row_json(row));
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

inline std::string pde_report_json(const PdeGridReport& rep) {
  nlohmann::json j;
  j["metadata"] = detail::metadata_json(rep.meta);
  j["value_dim"] = rep.value_dim;
  j["state_dim"] = rep.state_dim;
  j["epsilons"] = rep.epsilons;
  j["sup_gaps"] = rep.sup_gaps;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : rep.cells) {
    nlohmann::json c;
    c["t"] = cell.t;
    c["x"] = detail::to_std(cell.x);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : cell.rows) rows.push_back(detail::row_json(row));
    c["rows"] = rows;
    cells.push_back(c);
  }
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

inline std::string audit_report_json(const AuditReport& rep) {
  nlohmann::json j;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    nlohmann::json ej = {{"name", e.name},
                         {"inequality", e.inequality},
                         {"observed", e.observed},
                         {"satisfied", e.satisfied},
                         {"samples", e.samples}};
    if (!std::isnan(e.declared)) ej["declared"] = e.declared;
    entries.push_back(ej);
  }
  j["entries"] = entries;
  j["estimated_constants"] = {{"L1", rep.l1_hat},
                              {"L2", rep.l2_hat},
                              {"L3", rep.l3_hat},
                              {"L4", rep.l4_hat},
                              {"iota", rep.iota_hat}};
  j["ok"] = rep.ok();
  return j.dump(2) + "\n";
}

inline std::string backward_summary_json(const BackwardSolution& sol,
                                         const ReportMetadata& meta) {
  nlohmann::json j;
  j["metadata"] = detail::metadata_json(meta);
  j["start_value"] = detail::to_std(sol.start_value);
  j["start_stderr"] = detail::to_std(sol.start_stderr);
  j["n_paths"] = sol.n_paths;
  j["n_steps"] = sol.n_steps;
  j["martingale_statistic"] = sol.martingale_statistic;
  j["moments"] = detail::moments_json(sol.moments);
  j["resolvent_exact"] = sol.resolvent_exact;
  return j.dump(2) + "\n";
}

}  // namespace mvsde
