#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "stictaf/numerics.hpp"
#include "support/oracles.hpp"

using namespace stictaf;

TEST_CASE("erfc examples") {
  CHECK(stictaf::erfc(0.0) == 1.0);
  const double tail = stictaf::erfc(10.0);
  CHECK(tail > 0.0);
  CHECK(tail < 1e-40);
  CHECK(stictaf::erfc(0.4769362762) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("erfc relative accuracy against series and continued fraction") {
  double worst = 0.0;
  for (double x = -6.0; x <= 6.0; x += 0.01) {
    const double ref = static_cast<double>(oracle::erfc_series_cf(x));
    worst = std::max(worst, std::abs(stictaf::erfc(x) - ref) / ref);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("erfc is strictly decreasing and bounded") {
  // Below x = -5 consecutive grid values of erfc differ by less than one ulp
  // of 2, so strictness can only be observed above that point.
  double prev = 2.0;
  for (double x = -6.0; x <= 6.0; x += 1e-3) {
    const double v = stictaf::erfc(x);
    if (x > -5.0)
      CHECK(v < prev);
    else
      CHECK(v <= prev);
    CHECK(v > 0.0);
    CHECK(v <= 2.0);
    prev = v;
  }
}

TEST_CASE("log_erfc agrees with the direct log where erfc is representable") {
  for (double x = -5.0; x <= 25.0; x += 0.05) {
    const long double ref = std::log(oracle::erfc_series_cf(x));
    CHECK(log_erfc(x) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
  }
  // Far tail: leading asymptotics log stictaf::erfc(x) ~ -x^2 - log(x sqrt(pi)).
  const double x = 1e4;
  CHECK(log_erfc(x) == doctest::Approx(-x * x - std::log(x * kSqrtPi)).epsilon(1e-12));
}

TEST_CASE("erfcinv examples") {
  CHECK(erfcinv(1.0) == doctest::Approx(0.0).epsilon(1e-14));
  const double r = oracle::erfcinv_bisect(0.5);
  CHECK(r == doctest::Approx(0.4769362762).epsilon(1e-9));
  CHECK(std::abs(erfcinv(0.5) - 0.4769362762) < 1e-8);
  CHECK(std::abs(erfcinv(1.5) + 0.4769362762) < 1e-8);
  CHECK_THROWS_AS(erfcinv(0.0), DomainError);
  CHECK_THROWS_AS(erfcinv(2.0), DomainError);
  CHECK_THROWS_AS(erfcinv(-1.0), DomainError);
}

TEST_CASE("erfcinv inverts erfc") {
  for (double x = -5.0; x <= 5.0; x += 0.01) {
    // For negative x, erfc(x) is rounded near 2 and the preimage is only
    // determined up to half an ulp of 2 divided by |erfc'(x)|.
    const double slope = 2.0 / kSqrtPi * std::exp(-x * x);
    const double conditioning = x < 0.0 ? 2.0 * 2.3e-16 / slope : 0.0;
    CHECK(std::abs(erfcinv(stictaf::erfc(x)) - x) < std::max(1e-9, conditioning));
  }
  for (double p = 1e-300; p < 1.99; p = p * 1.7 + 1e-3) {
    CHECK(stictaf::erfc(erfcinv(p)) == doctest::Approx(p).epsilon(1e-10));
  }
}

TEST_CASE("erfcinv_log handles probabilities below double range") {
  for (double lp : {-1e-8, -0.5, -10.0, -700.0, -800.0, -1e4, -1e6}) {
    const double x = erfcinv_log(lp);
    CHECK(log_erfc(x) == doctest::Approx(lp).epsilon(1e-12));
  }
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(7, 3), b(7, 3), c(7, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || (x != c.next_u64());
  }
  CHECK(differs);
  RngStream s1 = a.split("purpose", 1), s2 = a.split("purpose", 1), s3 = a.split("purpose", 2);
  CHECK(s1.stream_id() == s2.stream_id());
  CHECK(s1.stream_id() != s3.stream_id());
  CHECK(a.split("alpha").stream_id() != a.split("beta").stream_id());
}

TEST_CASE("uniform and normal moments") {
  RngStream rng(1, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 0.003);
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(std::abs(sn2 / n - 1.0) < 0.015);
}

TEST_CASE("gamma moments for small and large shape") {
  for (double shape : {0.3, 0.5, 1.0, 4.5}) {
    RngStream rng(11, static_cast<std::uint64_t>(shape * 10));
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double g = rng.gamma(shape);
      s += g;
      s2 += g * g;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.02));
    CHECK(var == doctest::Approx(shape).epsilon(0.05));
  }
}

TEST_CASE("student_t_draw examples") {
  {
    RngStream rng(2024, 1);
    std::vector<double> xs(1000000);
    for (auto& x : xs) x = student_t_draw(1.0, rng);
    std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
    CHECK(std::abs(xs[xs.size() / 2]) < 0.01);
  }
  {
    RngStream rng(2024, 2);
    const int n = 1000000;
    int count = 0;
    for (int i = 0; i < n; ++i) count += std::abs(student_t_draw(2.0, rng)) > 10.0;
    const double expected = oracle::student_t_two_sided_tail(10.0, 2.0);
    CHECK(expected == doctest::Approx(0.00497).epsilon(0.01));
    CHECK(std::abs(static_cast<double>(count) / n - expected) < 0.0005);
  }
  {
    RngStream rng(2024, 3);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = student_t_draw(30.0, rng);
      s += x;
      s2 += x * x;
    }
    const double var = s2 / n - (s / n) * (s / n);
    CHECK(std::abs(var - 30.0 / 28.0) < 0.05);
  }
  RngStream rng(1, 1);
  CHECK_THROWS_AS(student_t_draw(0.0, rng), DomainError);
  CHECK_THROWS_AS(student_t_draw(-2.0, rng), DomainError);
}

TEST_CASE("student_t_draw large-nu limit matches normal quantiles") {
  RngStream rng(99, 0);
  std::vector<double> xs(200000);
  for (auto& x : xs) x = student_t_draw(1e6, rng);
  std::sort(xs.begin(), xs.end());
  for (double p : {0.1, 0.5, 0.9}) {
    CHECK(std::abs(quantile_type7(xs, p) - oracle::normal_quantile(p)) < 1e-2);
  }
}

TEST_CASE("top_magnitudes examples") {
  {
    std::vector<double> xs{1, -5, 3};
    auto m = top_magnitudes(xs, 1);
    CHECK(m.values == std::vector<double>{5, 3});
    CHECK(m.source_indices == std::vector<std::size_t>{1, 2});
  }
  {
    std::vector<double> xs{2, 2, 2};
    auto m = top_magnitudes(xs, 1);
    CHECK(m.values == std::vector<double>{2, 2});
    CHECK(m.source_indices == std::vector<std::size_t>{0, 1});
  }
  {
    RngStream rng(5, 5);
    std::vector<double> xs(1000000);
    for (auto& x : xs) x = student_t_draw(2.0, rng);
    auto m = top_magnitudes(xs, 20);
    REQUIRE(m.values.size() == 21);
    std::vector<double> mags(xs.size());
    std::transform(xs.begin(), xs.end(), mags.begin(), [](double x) { return std::abs(x); });
    std::sort(mags.begin(), mags.end(), std::greater<>());
    for (int i = 0; i < 21; ++i) {
      CHECK(m.values[i] > 0.0);
      CHECK(m.values[i] == mags[i]);
    }
  }
  std::vector<double> few{1.0};
  CHECK_THROWS_AS(top_magnitudes(few, 1), DomainError);
}

TEST_CASE("top_magnitudes equals full sort then prefix on random inputs") {
  RngStream rng(3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(300);
    const std::size_t j = 1 + rng.index(n - 1);
    std::vector<double> xs(n);
    // Coarse values force many ties.
    for (auto& x : xs) x = std::round(rng.normal() * 3.0) / 2.0;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(xs[a]) > std::abs(xs[b]);
    });
    auto m = top_magnitudes(xs, j);
    REQUIRE(m.values.size() == j + 1);
    for (std::size_t i = 0; i <= j; ++i) {
      CHECK(m.source_indices[i] == idx[i]);
      CHECK(m.values[i] == std::abs(xs[idx[i]]));
      if (i > 0) CHECK(m.values[i - 1] >= m.values[i]);
    }
  }
}

TEST_CASE("quantile_type7 interpolates") {
  std::vector<double> xs{1, 2, 3, 4};
  CHECK(quantile_type7(xs, 0.0) == 1.0);
  CHECK(quantile_type7(xs, 1.0) == 4.0);
  CHECK(quantile_type7(xs, 0.5) == doctest::Approx(2.5));
}
