#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "mvsde/common.hpp"

namespace mvsde {

// Identifies one independent random stream.  Streams are derived purely by
// counter hashing, so draw k of stream (seed, path, substream) is a pure
// function of its key: results are bitwise reproducible no matter how work is
// scheduled across workers.  Substream 0 carries the Brownian increments of a
// path; higher substreams are free for samplers and audits.
struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t path_index = 0;
  std::uint64_t substream = 0;
};

namespace detail {

// SplitMix64 finalizer: the standard 64-bit avalanche mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Collapse a key to one 64-bit stream state.  Each field passes through the
// finalizer so that adjacent seeds / path indices / substreams land far apart.
inline std::uint64_t stream_state(const StreamKey& key) {
  std::uint64_t s = mix64(key.master_seed + kGolden);
  s = mix64(s ^ mix64(key.path_index + 0xd1b54a32d192ed03ull));
  s = mix64(s ^ mix64(key.substream + 0x8cb92ba72f3d8dd7ull));
  return s;
}

// Value of counter `block` in the stream: SplitMix64 with start state `state`.
inline std::uint64_t counter_value(std::uint64_t state, std::uint64_t block) {
  return mix64(state + (block + 1) * kGolden);
}

// Map to (0, 1]: never 0, so log() below stays finite.
inline double to_unit_positive(std::uint64_t r) {
  return static_cast<double>((r >> 11) + 1) * 0x1.0p-53;
}

// Map to [0, 1).
inline double to_unit(std::uint64_t r) {
  return static_cast<double>(r >> 11) * 0x1.0p-53;
}

// Standard normal draw j of a stream (Box-Muller, cosine branch; two counter
// values per draw).  Stateless: any draw is addressable directly.
inline double standard_normal(std::uint64_t state, std::uint64_t j) {
  const double u1 = to_unit_positive(counter_value(state, 2 * j));
  const double u2 = to_unit(counter_value(state, 2 * j + 1));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

// n Brownian increments in R^m over steps of length dt: N(0, dt) i.i.d.,
// flattened [step][coordinate].  Pure function of (key, n, m, dt).
inline std::vector<double> gaussian_increments(const StreamKey& key, int n,
                                               int m, double dt) {
  detail::require(n >= 0, "gaussian_increments: n must be >= 0");
  detail::require(m >= 1, "gaussian_increments: m must be >= 1");
  detail::require(dt > 0.0 && std::isfinite(dt),
                  "gaussian_increments: dt must be positive and finite");
  const std::uint64_t state = detail::stream_state(key);
  const double sd = std::sqrt(dt);
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = sd * detail::standard_normal(state, j);
  }
  return out;
}

// Same stream, written into a caller-provided buffer (hot-loop variant).
inline void gaussian_increments_into(const StreamKey& key, double dt,
                                     std::span<double> out) {
  detail::require(dt > 0.0 && std::isfinite(dt),
                  "gaussian_increments: dt must be positive and finite");
  const std::uint64_t state = detail::stream_state(key);
  const double sd = std::sqrt(dt);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = sd * detail::standard_normal(state, j);
  }
}

// Uniform draw j of `key` in [lo, hi) -- used by samplers and audits.
inline double uniform_draw(const StreamKey& key, std::uint64_t j, double lo,
                           double hi) {
  const std::uint64_t state = detail::stream_state(key);
  return lo + (hi - lo) * detail::to_unit(detail::counter_value(state, j));
}

// Componentwise sample mean and standard error of the mean.
//
// stderr uses the unbiased variance and requires at least two samples; with a
// single sample it is NaN (flagged undefined).  Empty input is an error.
struct MeanStderr {
  Vector mean;
  Vector stderr_of_mean;
};

inline MeanStderr mean_stderr(const std::vector<Vector>& samples) {
  detail::require(!samples.empty(), "mean_stderr: empty sample set");
  const auto n = static_cast<double>(samples.size());
  const Eigen::Index d = samples.front().size();
  Vector mean = Vector::Zero(d);
  for (const auto& s : samples) {
    detail::require(s.size() == d, "mean_stderr: inconsistent dimensions");
    mean += s;
  }
  mean /= n;
  Vector se = Vector::Constant(d, kNaN);
  if (samples.size() >= 2) {
    Vector ss = Vector::Zero(d);
    for (const auto& s : samples) {
      Vector c = s - mean;
      ss += c.cwiseProduct(c);
    }
    se = (ss / (n - 1.0) / n).cwiseSqrt();
  }
  return {std::move(mean), std::move(se)};
}

// Scalar overload: (mean, stderr of mean).
inline std::pair<double, double> mean_stderr(std::span<const double> samples) {
  detail::require(!samples.empty(), "mean_stderr: empty sample set");
  const auto n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double se = kNaN;
  if (samples.size() >= 2) {
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    se = std::sqrt(ss / (n - 1.0) / n);
  }
  return {mean, se};
}

}  // namespace mvsde
