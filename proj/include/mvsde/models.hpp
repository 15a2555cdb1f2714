#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"

namespace mvsde {

using ModelParams = std::map<std::string, double>;
using ModelFactory = std::function<CoefficientSet(const ModelParams&)>;

namespace detail {

inline double param_or(const ModelParams& p, const std::string& key,
                       double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

// 1-d benchmark: linear drift and driver with periodic modulation, affine
// terminal value.  All time dependence averages in closed form, which makes
// the model suitable for oracle checks:
//   b(s,x)  = (1 + drift_osc sin s) rate x        -> mean rate x
//   sigma   = sqrt(diff_base + diff_osc sin s)    -> mean square diff_base
//   f(s,x,y)= (1 + driver_osc cos s) (x - y)      -> mean x - y
//   g(t,x,y)= boundary_rate y
//   Phi(x)  = (1 + x) / 2
inline CoefficientSet periodic_linear_1d(const ModelParams& p) {
  const double rate = param_or(p, "rate", -0.5);
  const double drift_osc = param_or(p, "drift_osc", 1.0);
  const double diff_base = param_or(p, "diff_base", 1.0);
  const double diff_osc = param_or(p, "diff_osc", 0.5);
  const double driver_osc = param_or(p, "driver_osc", 1.0);
  const double boundary_rate = param_or(p, "boundary_rate", -0.2);
  require(diff_base - std::abs(diff_osc) > 0.0,
          "periodic_linear_1d: diffusion must stay elliptic");

  CoefficientSet c;
  c.name = "periodic_linear_1d";
  c.state_dim = 1;
  c.value_dim = 1;
  c.period = 2.0 * kPi;
  c.drift = [=](double s, const Vector& x) {
    Vector b(1);
    b[0] = (1.0 + drift_osc * std::sin(s)) * rate * x[0];
    return b;
  };
  c.diffusion = [=](double s, const Vector&) {
    Matrix sg(1, 1);
    sg(0, 0) = std::sqrt(diff_base + diff_osc * std::sin(s));
    return sg;
  };
  c.driver = [=](double s, const Vector& x, const Vector& y) {
    Vector f(1);
    f[0] = (1.0 + driver_osc * std::cos(s)) * (x[0] - y[0]);
    return f;
  };
  c.boundary_driver = [=](double, const Vector&, const Vector& y) {
    Vector g(1);
    g[0] = boundary_rate * y[0];
    return g;
  };
  c.terminal = [](const Vector& x) {
    Vector v(1);
    v[0] = 0.5 * (1.0 + x[0]);
    return v;
  };
  const double lb = (1.0 + std::abs(drift_osc)) * std::abs(rate);
  const double lf = 1.0 + std::abs(driver_osc);
  c.growth_forward = std::max(lb * lb, diff_base + std::abs(diff_osc));
  c.growth_driver = 2.0 * lf * lf;
  c.growth_boundary = boundary_rate * boundary_rate;
  c.ellipticity = diff_base - std::abs(diff_osc);
  return c;
}

// Time-homogeneous counterpart of periodic_linear_1d: the averaged system
// coincides with the original one coefficient for coefficient.
inline CoefficientSet constant_linear_1d(const ModelParams& p) {
  const double rate = param_or(p, "rate", -0.5);
  const double diff_base = param_or(p, "diff_base", 1.0);
  const double boundary_rate = param_or(p, "boundary_rate", -0.2);
  require(diff_base > 0.0, "constant_linear_1d: diffusion must be elliptic");

  CoefficientSet c;
  c.name = "constant_linear_1d";
  c.state_dim = 1;
  c.value_dim = 1;
  c.time_constant = true;
  const double sig = std::sqrt(diff_base);
  c.drift = [=](double, const Vector& x) {
    Vector b(1);
    b[0] = rate * x[0];
    return b;
  };
  c.diffusion = [=](double, const Vector&) {
    Matrix sg(1, 1);
    sg(0, 0) = sig;
    return sg;
  };
  c.driver = [](double, const Vector& x, const Vector& y) {
    Vector f(1);
    f[0] = x[0] - y[0];
    return f;
  };
  c.boundary_driver = [=](double, const Vector&, const Vector& y) {
    Vector g(1);
    g[0] = boundary_rate * y[0];
    return g;
  };
  c.terminal = [](const Vector& x) {
    Vector v(1);
    v[0] = 0.5 * (1.0 + x[0]);
    return v;
  };
  c.growth_forward = std::max(rate * rate, diff_base);
  c.growth_driver = 4.0;
  c.growth_boundary = boundary_rate * boundary_rate;
  c.ellipticity = diff_base;
  return c;
}

// 2-d model with a rotating diffusion frame: sigma(s) = R(s) diag(d1, d2),
// so a(s) = sigma sigma^T has constant eigenvalues {d1^2, d2^2} but rotating
// axes; the average is the isotropic matrix (d1^2 + d2^2)/2 I.  The drift
// pulses along the first axis and averages to half its scale.
inline CoefficientSet periodic_rotation_2d(const ModelParams& p) {
  const double d1 = param_or(p, "d1", 2.0);
  const double d2 = param_or(p, "d2", 1.0);
  const double drift_scale = param_or(p, "drift_scale", 1.0);
  require(d1 > 0.0 && d2 > 0.0, "periodic_rotation_2d: need d1, d2 > 0");

  CoefficientSet c;
  c.name = "periodic_rotation_2d";
  c.state_dim = 2;
  c.value_dim = 1;
  c.period = 2.0 * kPi;
  c.drift = [=](double s, const Vector&) {
    Vector b(2);
    const double cs = std::cos(s);
    b[0] = drift_scale * cs * cs;
    b[1] = 0.0;
    return b;
  };
  c.diffusion = [=](double s, const Vector&) {
    Matrix sg(2, 2);
    const double cs = std::cos(s), sn = std::sin(s);
    sg(0, 0) = cs * d1;
    sg(0, 1) = -sn * d2;
    sg(1, 0) = sn * d1;
    sg(1, 1) = cs * d2;
    return sg;
  };
  c.driver = [](double s, const Vector& x, const Vector& y) {
    Vector f(1);
    const double sn = std::sin(s);
    f[0] = sn * sn * (x[0] + y[0]);
    return f;
  };
  c.boundary_driver = [](double, const Vector&, const Vector&) {
    Vector g(1);
    g[0] = 0.0;
    return g;
  };
  c.terminal = [](const Vector& x) {
    Vector v(1);
    v[0] = x.squaredNorm();
    return v;
  };
  c.growth_forward = std::max(drift_scale * drift_scale, d1 * d1 + d2 * d2);
  c.growth_driver = 2.0;
  c.growth_boundary = 1.0;
  c.ellipticity = std::min(d1 * d1, d2 * d2);
  return c;
}

struct ModelRegistry {
  std::mutex mutex;
  std::map<std::string, ModelFactory> factories;

  ModelRegistry() {
    factories["periodic_linear_1d"] = periodic_linear_1d;
    factories["constant_linear_1d"] = constant_linear_1d;
    factories["periodic_rotation_2d"] = periodic_rotation_2d;
    // Short aliases used by configs.
    factories["periodic_linear"] = periodic_linear_1d;
    factories["constant"] = constant_linear_1d;
    factories["periodic_rotation"] = periodic_rotation_2d;
  }

  static ModelRegistry& instance() {
    static ModelRegistry r;
    return r;
  }
};

}  // namespace detail

// Registration hook for user-supplied coefficient models; later
// registrations under the same name replace earlier ones.
inline void register_coefficient_model(const std::string& name,
                                       ModelFactory factory) {
  detail::require(!name.empty() && factory != nullptr,
                  "register_coefficient_model: need a name and a factory");
  auto& r = detail::ModelRegistry::instance();
  std::lock_guard<std::mutex> lock(r.mutex);
  r.factories[name] = std::move(factory);
}

inline CoefficientSet make_coefficient_model(const std::string& name,
                                             const ModelParams& params = {}) {
  auto& r = detail::ModelRegistry::instance();
  ModelFactory f;
  {
    std::lock_guard<std::mutex> lock(r.mutex);
    auto it = r.factories.find(name);
    if (it == r.factories.end()) {
      throw std::invalid_argument("unknown coefficient model: " + name);
    }
    f = it->second;
  }
  CoefficientSet c = f(params);
  validate(c);
  return c;
}

inline std::vector<std::string> registered_models() {
  auto& r = detail::ModelRegistry::instance();
  std::lock_guard<std::mutex> lock(r.mutex);
  std::vector<std::string> names;
  names.reserve(r.factories.size());
  for (const auto& [k, v] : r.factories) names.push_back(k);
  return names;
}

}  // namespace mvsde
