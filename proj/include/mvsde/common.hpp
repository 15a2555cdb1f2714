#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace mvsde {

// All state/value vectors in this library are small (a few coordinates), so we
// use dynamically sized Eigen types with a compile-time capacity: they live on
// the stack and the hot Monte Carlo loops never touch the heap.
inline constexpr int kMaxDim = 8;

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kPi = 3.14159265358979323846;

inline const char* library_version() { return "0.1.0"; }

// A numerical procedure failed (non-finite state, singular regression beyond
// the ridge rescue, non-bracketing bisection, ...).  CLI exit code 3.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A time average did not settle within the configured horizon budget.
class averaging_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

// The averaged diffusion lost the declared uniform ellipticity.
class ellipticity_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void check_dim(int dim, const char* what) {
  if (dim < 1 || dim > kMaxDim) {
    throw std::invalid_argument(std::string(what) + ": dimension must be in [1, " +
                                std::to_string(kMaxDim) + "], got " +
                                std::to_string(dim));
  }
}

}  // namespace detail

}  // namespace mvsde
