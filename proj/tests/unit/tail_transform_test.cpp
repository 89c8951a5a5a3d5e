#include <cmath>
#include <vector>

#include "doctest.h"
#include "stictaf/tail_transform.hpp"
#include "support/oracles.hpp"
#include "support/quadrature.hpp"

using namespace stictaf;
using ad::Var;

namespace {

TtfParams one_d(double mu, double sigma, TailIndex pos, TailIndex neg) {
  TtfParams p = TtfParams::identity(1);
  p.mu[0] = mu;
  p.sigma[0] = sigma;
  p.xi_pos[0] = pos;
  p.xi_neg[0] = neg;
  return p;
}

double fwd(const TtfParams& p, double z, double* ld = nullptr) {
  return ttf_scalar_forward<double>(z, p.mu[0], p.sigma[0], p.xi_pos[0], p.xi_neg[0], ld);
}

double inv(const TtfParams& p, double x, double* ld = nullptr) {
  return ttf_scalar_inverse<double>(x, p.mu[0], p.sigma[0], p.xi_pos[0], p.xi_neg[0], ld);
}

}  // namespace

TEST_CASE("forward examples") {
  for (double xi : {0.5, 1.0, 3.0, 10.0}) {
    auto p = one_d(1.5, 2.0, xi, xi);
    double ld = 0.0;
    CHECK(fwd(p, 1.5, &ld) == 1.5);
    CHECK(std::exp(ld) == doctest::Approx(0.7978846).epsilon(1e-7));
  }
  // r where erfc(r / sqrt 2) = 1/2, obtained from a bisection oracle
  const double r = std::sqrt(2.0) * oracle::erfcinv_bisect(0.5);
  CHECK(r == doctest::Approx(0.6744898).epsilon(1e-7));
  auto p1 = one_d(-0.3, 1.7, 1.0, 1.0);
  CHECK(fwd(p1, -0.3 + 1.7 * r) == doctest::Approx(-0.3 + 1.7).epsilon(1e-12));

  auto light = TtfParams::identity(3);
  std::vector<double> z{0.4, -7.0, 22.0};
  auto res = ttf_forward<double>(light, z);
  CHECK(res.x == z);
  CHECK(res.log_det == 0.0);
}

TEST_CASE("inverse examples") {
  auto p = one_d(0.8, 0.5, 1.0, 1.0);
  CHECK(inv(p, 0.8) == 0.8);
  const double r = std::sqrt(2.0) * oracle::erfcinv_bisect(0.5);
  CHECK(inv(p, 0.8 + 0.5 * 1.0) == doctest::Approx(0.8 + 0.5 * r).epsilon(1e-12));
}

TEST_CASE("round trip over the image") {
  RngStream rng(1, 1);
  for (double xi : {0.5, 1.0, 3.0, 10.0}) {
    auto p = one_d(0.3, 1.3, xi, 2.0);
    double worst = 0.0, worst_ld = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double z = 0.3 + 1.3 * 4.0 * rng.normal();
      double ld_f = 0, ld_i = 0;
      const double x = fwd(p, z, &ld_f);
      const double zz = inv(p, x, &ld_i);
      const double back = fwd(p, zz);
      worst = std::max(worst, std::abs(back - x) / std::max(1.0, std::abs(x)));
      worst = std::max(worst, std::abs(zz - z));
      worst_ld = std::max(worst_ld, std::abs(ld_f + ld_i));
    }
    CAPTURE(xi);
    CHECK(worst < 1e-7);
    CHECK(worst_ld < 1e-7);
  }
}

TEST_CASE("scalar maps are strictly increasing") {
  for (double xi : {0.5, 1.0, 3.0, 10.0}) {
    auto p = one_d(0.0, 1.0, xi, xi);
    double prev = -1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double z = -6.0 + 12.0 * i / 10000.0;
      const double x = fwd(p, z);
      CHECK(x > prev);
      prev = x;
    }
  }
}

TEST_CASE("forward derivative matches finite differences and is continuous at mu") {
  for (double xi : {0.5, 1.0, 3.0, 10.0}) {
    auto p = one_d(0.2, 0.7, xi, xi);
    RngStream rng(2, static_cast<std::uint64_t>(xi * 10));
    for (int i = 0; i < 200; ++i) {
      double z = 0.2 + 0.7 * 3.0 * rng.normal();
      if (std::abs(z - 0.2) < 1e-3) z += 0.01;
      double ld = 0;
      fwd(p, z, &ld);
      const double h = 1e-6 * std::max(1.0, std::abs(z));
      const double fd = (fwd(p, z + h) - fwd(p, z - h)) / (2 * h);
      CHECK(std::exp(ld) == doctest::Approx(fd).epsilon(1e-6));
    }
    // limit from both sides at the kink
    for (double eps : {1e-7, -1e-7}) {
      double ld = 0;
      fwd(p, 0.2 + eps, &ld);
      CHECK(std::abs(std::exp(ld) - std::sqrt(2.0 / M_PI)) < 1e-6);
    }
    // one-sided difference quotients at mu
    const double h = 1e-7;
    CHECK(std::abs((fwd(p, 0.2 + h) - fwd(p, 0.2)) / h - std::sqrt(2.0 / M_PI)) < 1e-6);
    CHECK(std::abs((fwd(p, 0.2) - fwd(p, 0.2 - h)) / h - std::sqrt(2.0 / M_PI)) < 1e-6);
  }
}

TEST_CASE("autodiff through the transform matches finite differences") {
  TtfParams p = TtfParams::identity(2);
  p.mu = {0.5, -1.0};
  p.sigma = {1.2, 0.4};
  p.xi_pos = {2.0, std::nullopt};
  p.xi_neg = {0.7, 4.0};
  RngStream rng(3, 3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> z{0.5 + 2 * rng.normal(), -1.0 + rng.normal()};
    auto f = [&](std::span<const Var> v) {
      auto r = ttf_forward<Var>(p, v);
      auto back = ttf_inverse<Var>(p, std::span<const Var>(r.x));
      return r.x[0] + 0.3 * r.x[1] + r.log_det + 0.1 * back.x[0] + back.log_det;
    };
    auto g = [&](const std::vector<double>& v) {
      auto r = ttf_forward<double>(p, v);
      auto back = ttf_inverse<double>(p, r.x);
      return r.x[0] + 0.3 * r.x[1] + r.log_det + 0.1 * back.x[0] + back.log_det;
    };
    auto vg = ad::value_and_gradient(f, z);
    for (int i = 0; i < 2; ++i) {
      auto zp = z, zm = z;
      const double h = 1e-6;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (g(zp) - g(zm)) / (2 * h);
      CHECK(vg.gradient[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("extreme inputs saturate with the coordinate index") {
  TtfParams p = TtfParams::identity(2);
  p.xi_pos[1] = kXiMin;
  std::vector<double> z{0.0, 60.0};
  try {
    ttf_forward<double>(p, z);
    FAIL("expected SaturationError");
  } catch (const SaturationError& e) {
    CHECK(e.coordinate == 1);
  }
}

TEST_CASE("pushforward log-survival slope equals the tail index") {
  SUBCASE("xi = 2") {
    auto p = one_d(0.0, 1.0, 2.0, std::nullopt);
    RngStream rng(11, 0);
    CHECK(tail_index_of_pushforward(p, 0, +1, 10000000, rng) == doctest::Approx(-2.0).epsilon(0.075));
  }
  SUBCASE("xi = 1") {
    auto p = one_d(0.0, 1.0, 1.0, 1.0);
    RngStream rng(12, 0);
    CHECK(std::abs(tail_index_of_pushforward(p, 0, -1, 10000000, rng) + 1.0) < 0.1);
  }
  SUBCASE("light coordinate") {
    auto p = one_d(0.0, 1.0, std::nullopt, std::nullopt);
    RngStream rng(13, 0);
    CHECK(tail_index_of_pushforward(p, 0, +1, 10000000, rng) < -10.0);
  }
}

TEST_CASE("component-wise pushforward density integrates to one") {
  // K = 2 mixture of TTF-transformed diagonal Gaussians.
  std::vector<TtfParams> comps(2, TtfParams::identity(2));
  comps[0].mu = {-1.0, 0.5};
  comps[0].sigma = {0.8, 1.1};
  comps[0].xi_pos = {1.5, std::nullopt};
  comps[0].xi_neg = {3.0, 2.0};
  comps[1].mu = {2.0, -1.0};
  comps[1].sigma = {0.6, 0.5};
  comps[1].xi_pos = {std::nullopt, 1.2};
  comps[1].xi_neg = {std::nullopt, 4.0};
  const std::vector<double> w{0.35, 0.65};
  auto density = [&](double x, double y) {
    double total = 0.0;
    for (int k = 0; k < 2; ++k) {
      std::vector<double> xs{x, y};
      auto back = ttf_inverse<double>(comps[k], xs);
      double lq = back.log_det;
      for (int l = 0; l < 2; ++l) {
        const double r = (back.x[l] - comps[k].mu[l]) / comps[k].sigma[l];
        lq += -0.5 * r * r - std::log(comps[k].sigma[l]) - kLogSqrt2Pi;
      }
      total += w[k] * std::exp(lq);
    }
    return total;
  };
  const double mass = quad::integrate_plane(density, 0.5, 0.0, 2.0, 2.0, 1e-5, 18);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
}
