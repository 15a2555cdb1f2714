#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvsde/common.hpp"

namespace mvsde {

// The coefficient family of one forward-backward system:
//   forward   dX = drift(s, X) ds + diffusion(s, X) dB   (reflected),
//   backward  driver f(s, X, Y) ds + boundary_driver g(s, X, Y) d|K|,
//   terminal  Y_T = terminal(X_T).
// `period` marks time-periodic coefficients (quadrature averaging); otherwise
// long-horizon Cesaro averaging is used.  The declared growth/ellipticity
// constants are audited empirically, never trusted.
struct CoefficientSet {
  int state_dim = 1;  // dimension of X
  int value_dim = 1;  // dimension of Y

  std::function<Vector(double, const Vector&)> drift;
  std::function<Matrix(double, const Vector&)> diffusion;
  std::function<Vector(double, const Vector&, const Vector&)> driver;
  std::function<Vector(double, const Vector&, const Vector&)> boundary_driver;
  std::function<Vector(const Vector&)> terminal;

  std::optional<double> period;
  bool time_constant = false;

  double growth_forward = 1.0;   // bound/Lipschitz scale of drift & diffusion
  double growth_driver = 1.0;    // bound/Lipschitz scale of the driver
  double growth_boundary = 1.0;  // bound/Lipschitz scale of the boundary driver
  double ellipticity = 1.0;      // lower bound on diffusion * diffusion^T

  std::string name = "user";
};

inline void validate(const CoefficientSet& c) {
  detail::check_dim(c.state_dim, "CoefficientSet.state_dim");
  detail::check_dim(c.value_dim, "CoefficientSet.value_dim");
  detail::require(static_cast<bool>(c.drift) && static_cast<bool>(c.diffusion) &&
                      static_cast<bool>(c.driver) &&
                      static_cast<bool>(c.boundary_driver) &&
                      static_cast<bool>(c.terminal),
                  "CoefficientSet: all five coefficient callables are required");
  if (c.period) {
    detail::require(*c.period > 0.0 && std::isfinite(*c.period),
                    "CoefficientSet: period must be positive and finite");
  }
  detail::require(c.ellipticity > 0.0,
                  "CoefficientSet: ellipticity must be positive");
}

// Quadrature / averaging knobs.  Defaults match the module contract:
// composite Gauss-Legendre with >= 64 nodes per period for periodic
// coefficients; trapezoid horizon doubling (step T0/1024, tolerance 1e-8,
// at most 20 doublings) otherwise.
struct AveragingOptions {
  int panels = 8;
  int nodes_per_panel = 8;
  double base_horizon = 1.0;  // T0 of the doubling scheme
  double tolerance = 1e-8;
  int max_doublings = 20;
  std::size_t memo_capacity = 1u << 16;
};

namespace detail {

struct GaussLegendre {
  std::vector<double> nodes;    // on (-1, 1)
  std::vector<double> weights;  // sum to 2
};

// Newton iteration on the Legendre recurrence; cached per order.
inline const GaussLegendre& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussLegendre> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendre g;
  g.nodes.resize(n);
  g.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double prev = x;
      x -= p0 / dp;
      if (std::abs(x - prev) <= 1e-15) break;
    }
    g.nodes[i] = -x;
    g.nodes[n - 1 - i] = x;
    g.weights[i] = g.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(n, std::move(g)).first->second;
}

template <class T>
std::string worst_component_name(const T& diff) {
  Eigen::Index r = 0, c = 0;
  diff.cwiseAbs().maxCoeff(&r, &c);
  if (diff.cols() == 1) return "component " + std::to_string(r);
  return "component (" + std::to_string(r) + "," + std::to_string(c) + ")";
}

// Mean of fn over one period by composite Gauss-Legendre quadrature.
template <class T, class F>
T periodic_average(F&& fn, double period, const AveragingOptions& opt) {
  const GaussLegendre& gl = gauss_legendre(opt.nodes_per_panel);
  T acc{};
  bool first = true;
  for (int p = 0; p < opt.panels; ++p) {
    const double a = period * p / opt.panels;
    const double b = period * (p + 1) / opt.panels;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (int k = 0; k < opt.nodes_per_panel; ++k) {
      const double s = mid + half * gl.nodes[k];
      const double w = half * gl.weights[k];
      if (first) {
        acc = w * fn(s);
        first = false;
      } else {
        acc += w * fn(s);
      }
    }
  }
  return acc / period;
}

// Cesaro mean over a doubling horizon, composite trapezoid with fixed step
// base_horizon/1024.  Fails with the worst component named when successive
// averages do not settle within the tolerance.
template <class T, class F>
T cesaro_average(F&& fn, const AveragingOptions& opt, const char* what) {
  const int steps0 = 1024;
  const double h = opt.base_horizon / steps0;
  auto at = [&](std::int64_t j) { return fn(h * static_cast<double>(j)); };

  std::int64_t n = steps0;  // current horizon = n*h
  T integral = 0.5 * h * at(0);
  for (std::int64_t j = 1; j < n; ++j) integral += h * at(j);
  integral += 0.5 * h * at(n);
  T prev_avg = integral / (h * static_cast<double>(n));

  for (int k = 0; k < opt.max_doublings; ++k) {
    integral += 0.5 * h * at(n);
    for (std::int64_t j = n + 1; j < 2 * n; ++j) integral += h * at(j);
    integral += 0.5 * h * at(2 * n);
    n *= 2;
    T avg = integral / (h * static_cast<double>(n));
    if ((avg - prev_avg).cwiseAbs().maxCoeff() < opt.tolerance) return avg;
    prev_avg = std::move(avg);
  }
  T diff = integral / (h * static_cast<double>(n)) - prev_avg;
  throw averaging_error(std::string(what) +
                        ": time average did not settle within " +
                        std::to_string(opt.max_doublings) + " doublings, " +
                        worst_component_name(diff) + " still moving");
}

}  // namespace detail

// Principal SPD square root via symmetric eigendecomposition.  `floor` is the
// smallest admissible eigenvalue of the input (half the declared ellipticity).
inline Matrix spd_sqrt(const Matrix& a, double floor) {
  if (a.rows() == 1 && a.cols() == 1) {
    if (a(0, 0) < floor) {
      throw ellipticity_error(
          "spd_sqrt: eigenvalue " + std::to_string(a(0, 0)) +
          " below the ellipticity floor " + std::to_string(floor));
    }
    Matrix r(1, 1);
    r(0, 0) = std::sqrt(a(0, 0));
    return r;
  }
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw numerical_error("spd_sqrt: matrix not symmetric within 1e-10");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) {
    throw numerical_error("spd_sqrt: eigendecomposition failed");
  }
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() < floor) {
    throw ellipticity_error(
        "spd_sqrt: eigenvalue " + std::to_string(ev.minCoeff()) +
        " below the ellipticity floor " + std::to_string(floor));
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Time average of the drift at a fixed state.
inline Vector average_drift(const CoefficientSet& c, const Vector& x,
                            const AveragingOptions& opt = {}) {
  if (c.time_constant) return c.drift(0.0, x);
  if (c.period) {
    return detail::periodic_average<Vector>(
        [&](double s) { return c.drift(s, x); }, *c.period, opt);
  }
  return detail::cesaro_average<Vector>([&](double s) { return c.drift(s, x); },
                                        opt, "average_drift");
}

// Time average of diffusion * diffusion^T at a fixed state.
inline Matrix average_diffusion_squared(const CoefficientSet& c,
                                        const Vector& x,
                                        const AveragingOptions& opt = {}) {
  auto a_of = [&](double s) -> Matrix {
    const Matrix sig = c.diffusion(s, x);
    return sig * sig.transpose();
  };
  if (c.time_constant) return a_of(0.0);
  if (c.period) return detail::periodic_average<Matrix>(a_of, *c.period, opt);
  return detail::cesaro_average<Matrix>(a_of, opt, "average_diffusion");
}

namespace detail {

// For a time-constant symmetric PSD diffusion the square root of its square
// is the matrix itself; return it directly so degenerate configurations stay
// bitwise identical to the unaveraged system.
inline std::optional<Matrix> constant_symmetric_psd_diffusion(
    const CoefficientSet& c, const Vector& x) {
  if (!c.time_constant) return std::nullopt;
  Matrix sig = c.diffusion(0.0, x);
  if (sig.rows() != sig.cols()) return std::nullopt;
  if ((sig - sig.transpose()).cwiseAbs().maxCoeff() != 0.0) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sig);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < 0.0) {
    return std::nullopt;
  }
  return sig;
}

}  // namespace detail

// Averaged diffusion: the unique SPD square root of the averaged square.
inline Matrix average_diffusion(const CoefficientSet& c, const Vector& x,
                                const AveragingOptions& opt = {}) {
  if (auto direct = detail::constant_symmetric_psd_diffusion(c, x)) {
    return *direct;
  }
  return spd_sqrt(average_diffusion_squared(c, x, opt), 0.5 * c.ellipticity);
}

// Time average of the driver at fixed (x, y).
inline Vector average_driver(const CoefficientSet& c, const Vector& x,
                             const Vector& y,
                             const AveragingOptions& opt = {}) {
  if (c.time_constant) return c.driver(0.0, x, y);
  if (c.period) {
    return detail::periodic_average<Vector>(
        [&](double s) { return c.driver(s, x, y); }, *c.period, opt);
  }
  return detail::cesaro_average<Vector>(
      [&](double s) { return c.driver(s, x, y); }, opt, "average_driver");
}

namespace detail {

// Memo key: exact argument bytes.
struct VecKey {
  std::vector<double> v;
  bool operator==(const VecKey&) const = default;
};

struct VecKeyHash {
  std::size_t operator()(const VecKey& k) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (double d : k.v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
    return static_cast<std::size_t>(h);
  }
};

template <class V>
class MemoCache {
 public:
  explicit MemoCache(std::size_t cap) : cap_(cap) {}
  template <class F>
  V get_or_compute(const VecKey& key, F&& compute) {
    {
      std::scoped_lock lock(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    V val = compute();
    std::scoped_lock lock(mu_);
    if (map_.size() < cap_) map_.emplace(key, val);
    return val;
  }

 private:
  std::size_t cap_;
  std::mutex mu_;
  std::unordered_map<VecKey, V, VecKeyHash> map_;
};

inline VecKey key_of(const Vector& x) {
  return VecKey{std::vector<double>(x.data(), x.data() + x.size())};
}
inline VecKey key_of(const Vector& x, const Vector& y) {
  VecKey k{std::vector<double>(x.data(), x.data() + x.size())};
  k.v.insert(k.v.end(), y.data(), y.data() + y.size());
  return k;
}

struct AveragedState {
  CoefficientSet base;
  AveragingOptions opt;
  std::string tag;
  MemoCache<Vector> drift_memo;
  MemoCache<std::pair<Matrix, Matrix>> diffusion_memo;  // (a_bar, sigma_bar)
  MemoCache<Vector> driver_memo;
  AveragedState(CoefficientSet c, const AveragingOptions& o)
      : base(std::move(c)),
        opt(o),
        tag((base.time_constant || base.period) ? "periodic-quadrature"
                                                : "horizon-doubling"),
        drift_memo(o.memo_capacity),
        diffusion_memo(o.memo_capacity),
        driver_memo(o.memo_capacity) {}
};

}  // namespace detail

// The averaged coefficient family: state-dependent only.  Values are memoized
// per exact argument (capped); all evaluations are pure, so cache hits and
// misses are bitwise interchangeable.
class AveragedCoefficients {
 public:
  AveragedCoefficients() = default;

  int state_dim() const { return st_->base.state_dim; }
  int value_dim() const { return st_->base.value_dim; }
  const std::string& method_tag() const { return st_->tag; }
  double average_tolerance() const { return st_->opt.tolerance; }
  const CoefficientSet& base() const { return st_->base; }

  Vector drift(const Vector& x) const {
    return st_->drift_memo.get_or_compute(detail::key_of(x), [&] {
      return average_drift(st_->base, x, st_->opt);
    });
  }
  Matrix diffusion_squared(const Vector& x) const {
    return diffusion_pair(x).first;
  }
  Matrix diffusion(const Vector& x) const { return diffusion_pair(x).second; }
  Vector driver(const Vector& x, const Vector& y) const {
    return st_->driver_memo.get_or_compute(detail::key_of(x, y), [&] {
      return average_driver(st_->base, x, y, st_->opt);
    });
  }
  // Same value as driver(), skipping the memo cache: backward sweeps evaluate
  // at continuously varying (x, y), where every lookup would miss.
  Vector driver_uncached(const Vector& x, const Vector& y) const {
    return average_driver(st_->base, x, y, st_->opt);
  }

  // Hot-path evaluator: one quadrature pass accumulating drift and squared
  // diffusion together (same nodes, same callables, bitwise-identical values
  // to the separate calls), then the SPD root.
  void drift_and_diffusion(const Vector& x, Vector& drift_out,
                           Matrix& diffusion_out) const {
    const CoefficientSet& c = st_->base;
    if (c.time_constant) {
      drift_out = c.drift(0.0, x);
      if (auto direct = detail::constant_symmetric_psd_diffusion(c, x)) {
        diffusion_out = *direct;
      } else {
        const Matrix sig = c.diffusion(0.0, x);
        diffusion_out = spd_sqrt(sig * sig.transpose(), 0.5 * c.ellipticity);
      }
      return;
    }
    if (!c.period) {
      drift_out = drift(x);
      diffusion_out = diffusion(x);
      return;
    }
    const auto& gl = detail::gauss_legendre(st_->opt.nodes_per_panel);
    const double period = *c.period;
    Vector bacc;
    Matrix aacc;
    bool first = true;
    for (int p = 0; p < st_->opt.panels; ++p) {
      const double a = period * p / st_->opt.panels;
      const double b = period * (p + 1) / st_->opt.panels;
      const double half = 0.5 * (b - a);
      const double mid = 0.5 * (a + b);
      for (int k = 0; k < st_->opt.nodes_per_panel; ++k) {
        const double s = mid + half * gl.nodes[k];
        const double w = half * gl.weights[k];
        const Matrix sig = c.diffusion(s, x);
        if (first) {
          bacc = w * c.drift(s, x);
          aacc = w * (sig * sig.transpose());
          first = false;
        } else {
          bacc += w * c.drift(s, x);
          aacc += w * (sig * sig.transpose());
        }
      }
    }
    drift_out = bacc / period;
    diffusion_out = spd_sqrt(aacc / period, 0.5 * c.ellipticity);
  }

 private:
  friend AveragedCoefficients make_averaged(const CoefficientSet&,
                                            const AveragingOptions&);
  std::pair<Matrix, Matrix> diffusion_pair(const Vector& x) const {
    return st_->diffusion_memo.get_or_compute(detail::key_of(x), [&] {
      Matrix a = average_diffusion_squared(st_->base, x, st_->opt);
      Matrix s = average_diffusion(st_->base, x, st_->opt);
      return std::make_pair(std::move(a), std::move(s));
    });
  }
  std::shared_ptr<detail::AveragedState> st_;
};

inline AveragedCoefficients make_averaged(const CoefficientSet& c,
                                          const AveragingOptions& opt = {}) {
  validate(c);
  AveragedCoefficients avg;
  avg.st_ = std::make_shared<detail::AveragedState>(c, opt);
  return avg;
}

}  // namespace mvsde
