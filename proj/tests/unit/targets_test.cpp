#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "stictaf/targets.hpp"
#include "support/oracles.hpp"
#include "support/quadrature.hpp"

using namespace stictaf;

namespace {

// Kolmogorov-Smirnov distance of a sample against a continuous CDF.
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

double normal_cdf(double x) { return 0.5 * static_cast<double>(oracle::erfc_series_cf(-x / std::sqrt(2.0L))); }

// Pr(InvGamma(3, 1) <= s) = Pr(Gamma(3) >= 1/s)
double invgamma3_cdf(double s) {
  if (s <= 0) return 0.0;
  const double x = 1.0 / s;
  return std::exp(-x) * (1.0 + x + 0.5 * x * x);
}

void check_gradient(const TargetDensity& t, std::vector<double> z, double tol = 1e-6) {
  std::vector<double> g;
  const double v = t.log_density_grad(z, g);
  CHECK(v == doctest::Approx(t.log_density(z)).epsilon(1e-14));
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(z[i]));
    auto zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const double fd = (t.log_density(zp) - t.log_density(zm)) / (2 * h);
    CAPTURE(i);
    CHECK(g[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
  }
}

}  // namespace

TEST_CASE("NIG density: mode, support, normalization") {
  NigTarget t;
  CHECK(t.normalized());
  const std::vector<double> mode{0.0, 0.25};
  const double at_mode = t.log_density(mode);
  for (double ds : {-1e-3, 1e-3, 0.05}) {
    std::vector<double> z{0.0, 0.25 + ds};
    CHECK(t.log_density(z) < at_mode);
  }
  for (double s : {0.0, -1.0}) {
    std::vector<double> z{0.3, s};
    CHECK(t.log_density(z) == -std::numeric_limits<double>::infinity());
  }
  // closed-form density check
  std::vector<double> z{0.7, 1.3};
  const double expected = -0.5 * 0.49 - 0.5 * std::log(2 * M_PI) - std::log(2.0) - 4 * std::log(1.3) - 1 / 1.3;
  CHECK(t.log_density(z) == doctest::Approx(expected).epsilon(1e-13));
  auto dens = [&](double b, double s) {
    std::vector<double> p{b, s};
    return std::exp(t.log_density(p));
  };
  const double mass = quad::integrate_box(
      [&](double b, double u) {
        // s = u / (1 - u) covers (0, inf)
        const double s = u / (1.0 - u);
        return dens(b, s) / ((1.0 - u) * (1.0 - u));
      },
      -12.0, 12.0, 1e-12, 1.0 - 1e-12, 1e-7, 24);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("NIG tail quantities") {
  // survival of the scale coordinate at 5.56 is about one in a thousand
  CHECK(1.0 - invgamma3_cdf(5.56) == doctest::Approx(0.001).epsilon(0.15));
  const double surv = quad::integrate_line(
      [](double s) {
        if (s <= 5.56) return 0.0;
        std::vector<double> z{0.0, s};
        return std::exp(NigTarget().log_density(z) + 0.5 * std::log(2 * M_PI));
      },
      50.0, 50.0, 1e-12);
  CHECK(surv == doctest::Approx(1.0 - invgamma3_cdf(5.56)).epsilon(1e-6));
  CHECK(oracle::normal_quantile(0.999) == doctest::Approx(3.0902).epsilon(1e-4));
}

TEST_CASE("NIG exact sampler matches the density (KS)") {
  NigTarget t;
  RngStream rng(4, 0);
  const auto xs = t.sample(100000, rng);
  std::vector<double> b, s;
  for (const auto& z : xs) {
    b.push_back(z[0]);
    s.push_back(z[1]);
  }
  CHECK(ks_statistic(b, normal_cdf) < 0.01);
  CHECK(ks_statistic(s, invgamma3_cdf) < 0.01);
}

TEST_CASE("NIG continuation is a tangent extension below the cut") {
  NigTarget exact, cont(0.05);
  CHECK(!cont.normalized());
  for (double s : {0.05, 0.2, 3.0}) {
    std::vector<double> z{0.4, s};
    CHECK(cont.log_density(z) == doctest::Approx(exact.log_density(z)).epsilon(1e-14));
  }
  std::vector<double> lo{0.4, 0.05 - 1e-9}, hi{0.4, 0.05 + 1e-9};
  CHECK(std::abs(cont.log_density(lo) - cont.log_density(hi)) < 1e-6);
  std::vector<double> neg{0.4, -2.0};
  CHECK(std::isfinite(cont.log_density(neg)));
  std::vector<double> g;
  cont.log_density_grad(neg, g);
  CHECK(g[1] == doctest::Approx(-4.0 / 0.05 + 1.0 / 0.0025));
}

TEST_CASE("gradients agree with finite differences") {
  NigTarget nig;
  check_gradient(nig, {0.3, 0.7});
  check_gradient(nig, {-2.0, 4.0});
  ComplexMixtureTarget mix;
  RngStream rng(8, 0);
  for (int i = 0; i < 20; ++i) check_gradient(mix, {6.0 * rng.normal(), 6.0 * rng.normal()}, 1e-5);
  ProductTarget t23({2.0, 3.0});
  check_gradient(t23, {1.5, -20.0});
  std::vector<double> g;
  std::vector<double> outside{0.0, -1.0};
  CHECK(nig.log_density_grad(outside, g) == -std::numeric_limits<double>::infinity());
  CHECK(g == std::vector<double>{0.0, 0.0});
}

TEST_CASE("complex mixture: symmetry of the centred component") {
  ComplexMixtureTarget t;
  RngStream rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a{3 * rng.normal(), 3 * rng.normal()};
    std::vector<double> b{-a[0], a[1]}, c{a[0], -a[1]};
    const double v = t.component_log_density<double>(3, a);
    CHECK(t.component_log_density<double>(3, b) == doctest::Approx(v).epsilon(1e-14));
    CHECK(t.component_log_density<double>(3, c) == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("complex mixture integrates to one") {
  ComplexMixtureTarget t;
  auto f = [&](double x, double y) {
    std::vector<double> z{x, y};
    return std::exp(t.log_density(z));
  };
  // bulk box plus the surrounding tail frame of [-60, 60]^2
  const double bulk = quad::integrate_box(f, -10, 10, -10, 10, 1e-7, 24);
  double frame = 0.0;
  frame += quad::integrate_box(f, -60, 60, 10, 60, 1e-7, 20);
  frame += quad::integrate_box(f, -60, 60, -60, -10, 1e-7, 20);
  frame += quad::integrate_box(f, -60, -10, -10, 10, 1e-7, 20);
  frame += quad::integrate_box(f, 10, 60, -10, 10, 1e-7, 20);
  const double total = bulk + frame;
  CHECK(total == doctest::Approx(1.0).epsilon(2e-2));
  // the whole-plane mass is exactly one; the frame beyond 60 holds a few 1e-3
  const double plane = quad::integrate_plane(f, 0.0, 0.0, 4.0, 4.0, 1e-7, 24);
  CHECK(plane == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("two-moons normalizer against adaptive quadrature") {
  const double z = quad::integrate_box(
      [](double x, double y) { return std::exp(TwoMoons::log_energy(x, y)); }, -3.5, 3.5, -3.5, 3.5, 1e-10, 26);
  CHECK(TwoMoons::log_normalizer() == doctest::Approx(std::log(z)).epsilon(1e-8));
}

TEST_CASE("complex mixture sampler: component frequencies and heavy marginal") {
  ComplexMixtureTarget t;
  RngStream rng(10, 0);
  std::vector<int> labels;
  const std::size_t n = 1000000;
  const auto xs = t.sample_labelled(n, rng, labels);
  std::vector<double> counts(4, 0.0);
  std::size_t comp0 = 0, comp0_far = 0;
  for (std::size_t i = 0; i < n; ++i) {
    counts[labels[i]] += 1.0;
    if (labels[i] == 0) {
      ++comp0;
      if (std::abs(xs[i][1]) > 20.0) ++comp0_far;
    }
  }
  for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] / n - ComplexMixtureTarget::kWeights[k]) <= 0.002);
  const double p = oracle::student_t_two_sided_tail(20.0, 2.0);
  CHECK(p == doctest::Approx(1.0 - 20.0 / std::sqrt(402.0)).epsilon(1e-6));
  const double expected = p * comp0;
  CHECK(std::abs(comp0_far - expected) <= 4.0 * std::sqrt(expected));
}

TEST_CASE("two-moons sampler matches its density") {
  // Compare the radial profile of draws with the density integrated over rings.
  RngStream rng(12, 0);
  const int n = 100000;
  std::vector<double> radii;
  for (int i = 0; i < n; ++i) {
    auto p = TwoMoons::sample(rng);
    radii.push_back(std::hypot(p[0], p[1]));
  }
  const double log_z = TwoMoons::log_normalizer();
  auto radial_cdf = [&](double r) {
    return quad::integrate_box(
        [&](double rr, double th) { return rr * std::exp(TwoMoons::log_energy(rr * std::cos(th), rr * std::sin(th)) - log_z); },
        0.0, r, 0.0, 2 * M_PI, 1e-8, 18);
  };
  std::sort(radii.begin(), radii.end());
  double d = 0.0;
  for (int q = 1; q < 20; ++q) {
    const double r = radii[static_cast<std::size_t>(q * n / 20)];
    d = std::max(d, std::abs(radial_cdf(r) - q / 20.0));
  }
  CHECK(d < 0.01);
}

TEST_CASE("product targets and factory") {
  auto n2 = make_target("std_normal", 3);
  CHECK(n2->dim() == 3);
  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK(n2->log_density(zero) == doctest::Approx(-1.5 * std::log(2 * M_PI)));
  auto t23 = make_target("t2_t3");
  std::vector<double> z{1.0, 2.0};
  CHECK(std::exp(t23->log_density(z)) ==
        doctest::Approx(oracle::student_t_pdf(1.0, 2.0) * oracle::student_t_pdf(2.0, 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(make_target("nope"), std::invalid_argument);
  CHECK_THROWS_AS(ProductTarget({2.0, -1.0}), std::invalid_argument);
  ComplexMixtureTarget mix;
  CHECK(mix.has_sampler());
  auto lp = mix.as_function();
  CHECK(lp(std::vector<double>{6.0, 0.0}) == mix.log_density(std::vector<double>{6.0, 0.0}));
}
