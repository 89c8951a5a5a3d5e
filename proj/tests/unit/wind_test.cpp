#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "stictaf/wind.hpp"
#include "support/quadrature.hpp"

using namespace stictaf;

namespace {

WindParams generating_params() {
  WindParams p;
  p.gamma_sigma = {0.5, 1.0, 0.0, 1.5};
  p.eps_sigma = {0.2, -0.3, 0.8, 0.0};
  p.gamma_eta = {-2.5, -2.0, -1.8, -2.2};
  p.eps_eta = {-2.0, -2.6, -1.9, -2.3};
  p.a_star = {-0.5, 0.4, 1.0, 0.0};
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stictaf_wind_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

double lag1_indicator_corr(const WindCell& c) {
  std::vector<double> ind;
  for (double v : c.x) ind.push_back(v > c.threshold ? 1.0 : 0.0);
  double m = 0;
  for (double v : ind) m += v;
  m /= ind.size();
  double num = 0, den = 0;
  for (std::size_t t = 0; t < ind.size(); ++t) {
    den += (ind[t] - m) * (ind[t] - m);
    if (t + 1 < ind.size()) num += (ind[t] - m) * (ind[t + 1] - m);
  }
  return num / den;
}

}  // namespace

TEST_CASE("GPD pieces") {
  CHECK(gpd_cdf(2.0, 2.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  for (double y : {0.1, 1.0, 3.0, 10.0}) {
    CHECK(std::abs(gpd_cdf(y, 1.5, 1e-6) - (1.0 - std::exp(-y / 1.5))) < 1e-5);
  }
  const double mass = quad::integrate_line([](double y) { return y < 0 ? 0.0 : std::exp(gpd_log_pdf(y, 1.3, 0.4)); },
                                           5.0, 5.0, 1e-10);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(gpd_log_pdf(-1.0, 1.0, 0.3) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("pair probabilities over the four regions sum to one") {
  for (double alpha : {0.3, 0.6, 0.9}) {
    for (double eta : {0.1, 0.5}) {
      const double sigma = 1.7, rate = 0.12;
      auto dens = [&](double y1, double y2) { return std::exp(wind_pair_log_density(y1, y2, sigma, eta, alpha, rate)); };
      // exceedance residuals through y = s tan(theta) on (0, pi/2)
      auto half_line = [&](const std::function<double(double)>& f, double tol) {
        return quad::integrate([&](double th) {
          const double c = std::cos(th);
          return f(sigma * std::tan(th)) * sigma / (c * c);
        }, 0.0, 0.5 * M_PI, tol, 40, 16);
      };
      const double r11 = half_line([&](double y1) { return half_line([&](double y2) { return dens(y1, y2); }, 1e-13); }, 1e-12);
      const double r10 = half_line([&](double y1) { return dens(y1, -1.0); }, 1e-13);
      const double r01 = half_line([&](double y2) { return dens(-1.0, y2); }, 1e-13);
      const double r00 = dens(-1.0, -1.0);
      CAPTURE(alpha);
      CAPTURE(eta);
      CHECK(std::abs(r11 + r10 + r01 + r00 - 1.0) < 1e-8);
      CHECK(r11 == doctest::Approx(rate * (2.0 - std::pow(2.0, alpha))).epsilon(1e-8));
      CHECK(r10 == doctest::Approx(rate * (std::pow(2.0, alpha) - 1.0)).epsilon(1e-8));
      CHECK(r01 == doctest::Approx(r10).epsilon(1e-9));
    }
  }
}

TEST_CASE("alpha = 1 limit of the GP-scale logistic model") {
  const double sigma = 2.0, eta = 0.3, rate = 0.1;
  for (double y : {0.2, 1.0, 7.0}) {
    // the mixed partial of 1 - (1/z1 + 1/z2) vanishes: no joint exceedance mass
    CHECK(wind_pair_log_density(y, 0.5, sigma, eta, 1.0, rate) == -std::numeric_limits<double>::infinity());
    // one-sided region reduces to rate times the GPD density
    CHECK(wind_pair_log_density(y, -1.0, sigma, eta, 1.0, rate) ==
          doctest::Approx(std::log(rate) + gpd_log_pdf(y, sigma, eta)).epsilon(1e-13));
  }
  CHECK(std::exp(wind_pair_log_density(-1, -1, sigma, eta, 1.0, rate)) == doctest::Approx(1.0 - 2.0 * rate));
  // approaching alpha = 1 the joint density decays like (1 - alpha)
  const double a = wind_pair_log_density(1.0, 1.0, sigma, eta, 1.0 - 1e-4, rate);
  const double b = wind_pair_log_density(1.0, 1.0, sigma, eta, 1.0 - 1e-6, rate);
  CHECK(a - b == doctest::Approx(std::log(100.0)).epsilon(1e-3));
}

TEST_CASE("cell likelihood derivatives match finite differences") {
  RngStream rng(1, 0);
  const auto data = simulate_wind(generating_params(), 200, rng);
  for (int c : {0, 5, 15}) {
    const auto& cell = data.cells[c];
    std::array<double, 3> x{1.4, 0.25, 0.3};
    std::array<double, 3> g{};
    const double v = wind_cell_log_lik_grad(cell, x[0], x[1], x[2], g);
    CHECK(v == doctest::Approx(wind_cell_log_lik(cell, x[0], x[1], x[2])).epsilon(1e-14));
    for (int i = 0; i < 3; ++i) {
      auto p = x, m = x;
      const double h = 1e-6;
      p[i] += h;
      m[i] -= h;
      const double fd = (wind_cell_log_lik(cell, p[0], p[1], p[2]) - wind_cell_log_lik(cell, m[0], m[1], m[2])) / (2 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("log posterior gradient matches finite differences at random points") {
  RngStream rng(2, 0);
  WindTarget target(simulate_wind(generating_params(), 200, rng));
  RngStream pts(3, 0);
  const auto centre = generating_params().flatten();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> theta(kWindDim);
    for (int i = 0; i < kWindDim; ++i) theta[i] = centre[i] + 0.3 * pts.normal();
    std::vector<double> g;
    const double v = target.log_density_grad(theta, g);
    REQUIRE(std::isfinite(v));
    for (int i = 0; i < kWindDim; ++i) {
      auto p = theta, m = theta;
      const double h = 1e-5;
      p[i] += h;
      m[i] -= h;
      const double fd = (target.log_density(p) - target.log_density(m)) / (2 * h);
      CAPTURE(i);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("log posterior decomposes into cells and priors") {
  RngStream rng(4, 0);
  const auto data = simulate_wind(generating_params(), 200, rng);
  const auto p = generating_params();
  const auto theta = p.flatten();
  double expected = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int s = 0; s < 4; ++s) expected += wind_cell_log_lik(data.cell(j, s), p.sigma(j, s), p.eta(j, s), p.a_star[j]);
  for (int i = 0; i < 8; ++i) expected += student_t_log_density(theta[i], 10.0);
  for (int i = 8; i < 16; ++i) expected += student_t_log_density(theta[i], 3.0);
  for (int j = 0; j < 4; ++j) expected += std::log(p.alpha(j) * (1.0 - p.alpha(j)));
  CHECK(wind_log_posterior<double>(theta, data) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("parameter layout") {
  const auto p = generating_params();
  const auto flat = p.flatten();
  REQUIRE(flat.size() == 20);
  CHECK(flat[4] == p.eps_sigma[0]);
  CHECK(flat[19] == p.a_star[3]);
  const auto back = WindParams::unflatten(flat);
  CHECK(back.flatten() == flat);
  CHECK(WindParams::names()[16] == "a_star_1");
  CHECK(p.sigma(1, 2) == doctest::Approx(softplus(1.0) + softplus(0.8)));
  CHECK_THROWS(WindParams::unflatten(std::vector<double>(3)));
}

TEST_CASE("simulation is reproducible and matches pair-region frequencies") {
  const auto p = generating_params();
  RngStream rng(5, 0);
  const auto a = simulate_wind(p, 400, rng);
  const auto b = simulate_wind(p, 400, rng);
  for (std::size_t c = 0; c < a.cells.size(); ++c) CHECK(a.cells[c].x == b.cells[c].x);
  a.validate();

  const auto big = simulate_wind(p, 400000, RngStream(6, 0));
  for (int j : {0, 2}) {
    const auto& cell = big.cell(j, 1);
    double n11 = 0, n10 = 0, n00 = 0;
    const std::size_t n = cell.x.size() - 1;
    for (std::size_t t = 0; t < n; ++t) {
      const bool e0 = cell.x[t] > cell.threshold, e1 = cell.x[t + 1] > cell.threshold;
      n11 += e0 && e1;
      n10 += e0 && !e1;
      n00 += !e0 && !e1;
    }
    const double alpha = p.alpha(j), lam = 0.1;
    CAPTURE(j);
    CHECK(cell.rate == doctest::Approx(lam).epsilon(0.03));
    CHECK(n11 / n == doctest::Approx(lam * (2 - std::pow(2.0, alpha))).epsilon(0.05));
    CHECK(n10 / n == doctest::Approx(lam * (std::pow(2.0, alpha) - 1)).epsilon(0.05));
    CHECK(n00 / n == doctest::Approx(1 - std::pow(2.0, alpha) * lam).epsilon(0.01));
  }
}

TEST_CASE("exceedance indicators near alpha = 1") {
  auto p = generating_params();
  p.a_star = {9.0, 9.0, 9.0, 9.0};
  const auto data = simulate_wind(p, 100000, RngStream(7, 0));
  const double lam = 0.1;
  for (const auto& cell : data.cells) {
    // the GP-scale model excludes consecutive exceedances in this limit
    CHECK(lag1_indicator_corr(cell) == doctest::Approx(-lam / (1 - lam)).epsilon(0.1));
  }
  // strong dependence gives positive autocorrelation
  p.a_star = {-2.0, -2.0, -2.0, -2.0};
  const auto dep = simulate_wind(p, 100000, RngStream(8, 0));
  CHECK(lag1_indicator_corr(dep.cells[0]) > 0.3);
}

TEST_CASE("heavy margins: exceedance maxima grow with slope eta") {
  WindParams p = generating_params();
  p.gamma_eta.fill(-0.3);  // eta = 2 softplus(-0.3)
  p.eps_eta.fill(-0.3);
  const double eta = p.eta(0, 0);
  std::vector<double> log_n, log_max;
  for (std::size_t days : {2000u, 20000u, 200000u}) {
    std::vector<double> per_cell;
    const auto data = simulate_wind(p, days, RngStream(9, days));
    for (const auto& c : data.cells) per_cell.push_back(std::log(*std::max_element(c.x.begin(), c.x.end()) - c.threshold));
    std::sort(per_cell.begin(), per_cell.end());
    log_n.push_back(std::log(static_cast<double>(days)));
    log_max.push_back(0.5 * (per_cell[7] + per_cell[8]));
  }
  const double slope = (log_max.back() - log_max.front()) / (log_n.back() - log_n.front());
  CHECK(slope == doctest::Approx(eta).epsilon(0.15));
}

TEST_CASE("simulate_wind validates its inputs") {
  CHECK_THROWS_AS(simulate_wind(generating_params(), 10, RngStream(1, 1)), std::invalid_argument);
  WindSimulation bad;
  bad.rate = 0.7;
  CHECK_THROWS_AS(simulate_wind(generating_params(), 100, RngStream(1, 1), bad), std::invalid_argument);
}

TEST_CASE("CSV ingestion") {
  SUBCASE("three rows in one cell") {
    const auto path = temp_file("three.csv");
    write_text(path, "station,season,day,speed\n2,3,2,5.5\n2,3,1,4.0\n2,3,3,7.25\n");
    const auto rows = read_wind_rows(path.string());
    REQUIRE(rows.size() == 1);
    CHECK(rows.at({1, 2}) == std::vector<double>{4.0, 5.5, 7.25});
  }
  SUBCASE("quantile thresholds use the inverse ECDF") {
    std::vector<double> xs{7, 3, 9, 1, 10, 4, 2, 8, 5, 6};
    CHECK(quantile_type1(xs, 0.9) == 9.0);
    CHECK(quantile_type1(xs, 0.95) == 10.0);
    CHECK(quantile_type1(xs, 0.1) == 1.0);
  }
  SUBCASE("malformed row names the line") {
    const auto path = temp_file("bad.csv");
    write_text(path, "station,season,day,speed\na,b,c,d\n");
    try {
      read_wind_rows(path.string());
      FAIL("expected a parse error");
    } catch (const WindDataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("non-finite speed and bad header") {
    const auto path = temp_file("nan.csv");
    write_text(path, "station,season,day,speed\n1,1,1,3.0\n1,1,2,nan\n");
    CHECK_THROWS_WITH_AS(read_wind_rows(path.string()), doctest::Contains("line 3"), WindDataError);
    write_text(path, "a,b\n");
    CHECK_THROWS_AS(read_wind_rows(path.string()), WindDataError);
  }
  SUBCASE("missing cell") {
    const auto path = temp_file("missing.csv");
    write_text(path, "station,season,day,speed\n1,1,1,3.0\n1,1,2,4.0\n");
    CHECK_THROWS_WITH_AS(ingest_wind_csv(path.string(), {}), doctest::Contains("missing cell"), WindDataError);
  }
  SUBCASE("written datasets round-trip") {
    const auto data = simulate_wind(generating_params(), 120, RngStream(11, 0));
    const auto path = temp_file("roundtrip.csv");
    write_wind_csv(path.string(), data);
    ThresholdConfig cfg;
    cfg.fallback = {ThresholdRule::Kind::absolute, 0.0};
    for (const auto& c : data.cells) cfg.per_cell[{c.station, c.season}] = {ThresholdRule::Kind::absolute, c.threshold};
    const auto back = ingest_wind_csv(path.string(), cfg);
    for (std::size_t c = 0; c < data.cells.size(); ++c) {
      CHECK(back.cells[c].x == data.cells[c].x);
      CHECK(back.cells[c].rate == data.cells[c].rate);
    }
    ThresholdConfig q;
    q.fallback = {ThresholdRule::Kind::quantile, 0.9};
    const auto quant = ingest_wind_csv(path.string(), q);
    CHECK(quant.cells[3].threshold == quantile_type1(data.cells[3].x, 0.9));
  }
}
