#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "stictaf/flow_backbone.hpp"

using namespace stictaf;
using ad::Var;

namespace {

FlowStack random_stack(int d, std::uint64_t seed, double scale = 0.1, int blocks = 2) {
  RngStream rng(seed, 0);
  FlowConfig cfg;
  cfg.d = d;
  cfg.blocks = blocks;
  auto f = FlowStack::identity(cfg, rng);
  for (auto& p : f.params()) p += scale * rng.normal();
  return f;
}

Eigen::MatrixXd fd_jacobian(const FlowStack& f, const std::vector<double>& z, double h = 1e-6) {
  const int d = f.dim();
  Eigen::MatrixXd J(d, d);
  for (int j = 0; j < d; ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    auto xp = f.forward(zp).x, xm = f.forward(zm).x;
    for (int i = 0; i < d; ++i) J(i, j) = (xp[i] - xm[i]) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("identity-initialized stack") {
  RngStream rng(1, 1);
  FlowConfig cfg;
  cfg.d = 3;
  auto f = FlowStack::identity(cfg, rng);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> z{4 * rng.normal(), 4 * rng.normal(), 20 * rng.normal()};
    auto r = f.forward(z);
    for (int i = 0; i < 3; ++i) CHECK(r.x[i] == doctest::Approx(z[i]).epsilon(1e-13));
    CHECK(std::abs(r.log_det) < 1e-13);
    auto inv = f.inverse(z);
    for (int i = 0; i < 3; ++i) CHECK(inv.x[i] == doctest::Approx(z[i]).epsilon(1e-13));
  }
}

TEST_CASE("LU layer with upper diagonal (2, 0.5) has zero log-determinant") {
  RngStream rng(2, 2);
  FlowConfig cfg;
  cfg.d = 2;
  cfg.blocks = 1;
  auto f = FlowStack::identity(cfg, rng);
  std::vector<double> diag{2.0, 0.5};
  f.set_lu_upper_diag(0, diag);
  std::vector<double> z{0.3, -1.7};
  auto r = f.forward(z);
  CHECK(std::abs(r.log_det) < 1e-12);
  // reversal then diag(2, 0.5)
  CHECK(r.x[0] == doctest::Approx(2.0 * z[1]));
  CHECK(r.x[1] == doctest::Approx(0.5 * z[0]));
}

TEST_CASE("log-determinant matches a finite-difference Jacobian") {
  for (int d : {1, 2, 4}) {
    auto f = random_stack(d, 10 + d);
    RngStream rng(3, d);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> z(d);
      for (auto& v : z) v = 3.0 * rng.normal();
      const double ld = std::log(std::abs(fd_jacobian(f, z).determinant()));
      CHECK(f.forward(z).log_det == doctest::Approx(ld).epsilon(1e-4));
    }
  }
}

TEST_CASE("forward and inverse round trip") {
  auto f = random_stack(2, 77, 0.3);
  RngStream rng(4, 4);
  double worst = 0.0, worst_ld = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x{6.0 * rng.normal(), 6.0 * rng.normal()};
    auto inv = f.inverse(x);
    auto fwd = f.forward(inv.x);
    for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(fwd.x[i] - x[i]));
    worst_ld = std::max(worst_ld, std::abs(fwd.log_det + inv.log_det));
  }
  CHECK(worst < 1e-8);
  CHECK(worst_ld < 1e-8);
}

TEST_CASE("spline inverse recovers knot preimages exactly") {
  SplineConfig cfg;
  RngStream rng(5, 5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> raw(cfg.raw_size());
    for (auto& r : raw) r = 1.5 * rng.normal();
    // Knot abscissae from the width softmax, computed independently.
    double m = std::max({raw[0], raw[1], raw[2]}), s = 0.0;
    for (int k = 0; k < 3; ++k) s += std::exp(raw[k] - m);
    double xk = -cfg.bound;
    for (int k = 0; k < 2; ++k) {
      xk += 2 * cfg.bound * (cfg.min_width + (1 - 3 * cfg.min_width) * std::exp(raw[k] - m) / s);
      const double yk = rqs_forward<double>(raw, xk, cfg).y;
      const double back = rqs_inverse<double>(raw, yk, cfg).y;
      // bisection oracle on the forward map
      double lo = -cfg.bound, hi = cfg.bound;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rqs_forward<double>(raw, mid, cfg).y < yk ? lo : hi) = mid;
      }
      CHECK(back == doctest::Approx(xk).epsilon(1e-12));
      CHECK(back == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-12));
    }
  }
}

TEST_CASE("one-dimensional stacks are strictly increasing") {
  auto f = random_stack(1, 99, 0.4);
  const double B = f.config().spline.bound;
  double prev = -1e300;
  const int n = 10000;
  for (int i = 0; i <= n; ++i) {
    const double z = -B - 5.0 + (2 * B + 10.0) * i / n;
    std::vector<double> zz{z};
    const double x = f.forward(zz).x[0];
    CHECK(x > prev);
    prev = x;
  }
}

TEST_CASE("gradients with respect to parameters match finite differences") {
  auto f = random_stack(2, 123, 0.2);
  RngStream rng(6, 6);
  const auto& psi0 = f.params();
  int checked = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z{2.0 * rng.normal(), 2.0 * rng.normal()};
    // objective mixes the outputs and the log-determinant
    const double c0 = rng.normal(), c1 = rng.normal();
    auto objective_d = [&](const std::vector<double>& psi) {
      auto r = f.forward<double>(psi, z);
      return c0 * r.x[0] + c1 * r.x[1] + r.log_det;
    };
    auto vg = ad::value_and_gradient(
        [&](std::span<const Var> psi) {
          auto zz = sc::lift<Var>(z);
          auto r = f.forward<Var>(psi, zz);
          return c0 * r.x[0] + c1 * r.x[1] + r.log_det;
        },
        psi0);
    CHECK(vg.value == doctest::Approx(objective_d(psi0)).epsilon(1e-12));
    for (int q = 0; q < 10; ++q) {
      const std::size_t idx = rng.index(psi0.size());
      auto pp = psi0, pm = psi0;
      const double h = 1e-6;
      pp[idx] += h;
      pm[idx] -= h;
      const double fd = (objective_d(pp) - objective_d(pm)) / (2 * h);
      CHECK(std::abs(vg.gradient[idx] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-2));
      ++checked;
    }
  }
  CHECK(checked == 200);
}

TEST_CASE("inverse is differentiable in both inputs and parameters") {
  auto f = random_stack(2, 321, 0.2);
  std::vector<double> x{0.7, -2.1};
  const auto& psi0 = f.params();
  auto vg = ad::value_and_gradient(
      [&](std::span<const Var> psi) {
        auto xx = sc::lift<Var>(x);
        auto r = f.inverse<Var>(psi, xx);
        return r.x[0] - 0.5 * r.x[1] + r.log_det;
      },
      psi0);
  RngStream rng(8, 8);
  for (int q = 0; q < 30; ++q) {
    const std::size_t idx = rng.index(psi0.size());
    auto pp = psi0, pm = psi0;
    const double h = 1e-6;
    pp[idx] += h;
    pm[idx] -= h;
    auto g = [&](const std::vector<double>& psi) {
      auto r = f.inverse<double>(psi, x);
      return r.x[0] - 0.5 * r.x[1] + r.log_det;
    };
    const double fd = (g(pp) - g(pm)) / (2 * h);
    CHECK(std::abs(vg.gradient[idx] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-2));
  }
}

TEST_CASE("non-finite inputs are reported with a layer index") {
  auto f = random_stack(2, 5);
  std::vector<double> z{std::nan(""), 0.0};
  try {
    f.forward(z);
    FAIL("expected FlowError");
  } catch (const FlowError& e) {
    CHECK(e.layer == 0);
  }
}

TEST_CASE("segments cover the parameter vector") {
  auto f = random_stack(3, 1);
  std::size_t total = 0;
  for (const auto& s : f.segments()) total += s.size;
  CHECK(total == f.num_params());
}
