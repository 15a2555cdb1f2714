#include <algorithm>
#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "mvsde/rng.hpp"

using namespace mvsde;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("streams are deterministic and keyed", "[rng]") {
  const StreamKey a{42, 7, 0};
  const auto s1 = gaussian_increments(a, 16, 1, 0.5);
  const auto s2 = gaussian_increments(a, 16, 1, 0.5);
  REQUIRE(s1 == s2);  // bitwise

  const auto other_path = gaussian_increments(StreamKey{42, 8, 0}, 16, 1, 0.5);
  const auto other_seed = gaussian_increments(StreamKey{43, 7, 0}, 16, 1, 0.5);
  const auto other_sub = gaussian_increments(StreamKey{42, 7, 1}, 16, 1, 0.5);
  REQUIRE(s1 != other_path);
  REQUIRE(s1 != other_seed);
  REQUIRE(s1 != other_sub);
}

TEST_CASE("standard normals pass a Kolmogorov-Smirnov test", "[rng]") {
  const int n = 100000;
  std::vector<double> draws(n);
  const auto st = detail::stream_state(StreamKey{2024, 0, 0});
  for (int j = 0; j < n; ++j) draws[j] = detail::standard_normal(st, j);

  std::sort(draws.begin(), draws.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = normal_cdf(draws[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  // 1% critical value of the KS statistic: 1.63 / sqrt(n).
  REQUIRE(d * std::sqrt(static_cast<double>(n)) < 1.63);
}

TEST_CASE("standard normals have unit moments", "[rng]") {
  const int n = 100000;
  const auto st = detail::stream_state(StreamKey{5, 0, 0});
  double sum = 0.0, sq = 0.0;
  for (int j = 0; j < n; ++j) {
    const double z = detail::standard_normal(st, j);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("adjacent path streams are uncorrelated", "[rng]") {
  const int n = 10000;
  double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  for (int p = 0; p < n; ++p) {
    const auto a = detail::stream_state(StreamKey{99, static_cast<std::uint64_t>(p), 0});
    const auto b = detail::stream_state(StreamKey{99, static_cast<std::uint64_t>(p + 1), 0});
    const double x = detail::standard_normal(a, 0);
    const double y = detail::standard_normal(b, 0);
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  REQUIRE(std::abs(cov / std::sqrt(vx * vy)) < 0.05);
}

TEST_CASE("gaussian increments scale with dt", "[rng]") {
  const double dt = 0.25;
  const auto inc = gaussian_increments(StreamKey{1, 2, 0}, 20000, 1, dt);
  double sq = 0.0;
  for (double v : inc) sq += v * v;
  const double var = sq / static_cast<double>(inc.size());
  REQUIRE(std::abs(var - dt) < 0.01);
}

TEST_CASE("unit draws stay inside their ranges", "[rng]") {
  const auto st = detail::stream_state(StreamKey{77, 0, 3});
  for (int j = 0; j < 10000; ++j) {
    const double u = detail::to_unit_positive(detail::counter_value(st, j));
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
  for (int j = 0; j < 1000; ++j) {
    const double v = uniform_draw(StreamKey{77, 1, 3}, j, -2.0, 5.0);
    REQUIRE(v >= -2.0);
    REQUIRE(v <= 5.0);
  }
}

TEST_CASE("mean and standard error helpers", "[rng]") {
  const std::vector<double> xs = {0.0, 2.0};
  const auto [mean, se] = mean_stderr(std::span<const double>(xs));
  REQUIRE(mean == 1.0);
  REQUIRE(se == Catch::Approx(1.0));  // sd = sqrt(2), se = sd / sqrt(2)

  std::vector<Vector> vs;
  Vector a(2), b(2);
  a << 1.0, -1.0;
  b << 3.0, 1.0;
  vs.push_back(a);
  vs.push_back(b);
  const MeanStderr ms = mean_stderr(vs);
  REQUIRE(ms.mean[0] == 2.0);
  REQUIRE(ms.mean[1] == 0.0);
  REQUIRE(ms.stderr_of_mean[0] == Catch::Approx(1.0));
  REQUIRE(ms.stderr_of_mean[1] == Catch::Approx(1.0));
}
