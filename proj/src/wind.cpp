#include "stictaf/wind.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

#include "stictaf/scalar.hpp"

namespace stictaf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Forward-mode number carrying derivatives towards (sigma, eta, a_star).
struct Dual {
  double v = 0.0;
  std::array<double, 3> d{};
  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT
  static Dual seed(double value, int i) {
    Dual x(value);
    x.d[static_cast<std::size_t>(i)] = 1.0;
    return x;
  }
};

Dual chain(double v, const Dual& a, double da) {
  Dual r(v);
  for (int i = 0; i < 3; ++i) r.d[i] = da * a.d[i];
  return r;
}

Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
Dual operator/(const Dual& a, const Dual& b) {
  const double q = a.v / b.v;
  Dual r(q);
  for (int i = 0; i < 3; ++i) r.d[i] = (a.d[i] - q * b.d[i]) / b.v;
  return r;
}
Dual operator-(const Dual& a) { return chain(-a.v, a, -1.0); }

double val(double x) { return x; }
double val(const Dual& x) { return x.v; }

double dlog(double x) { return std::log(x); }
Dual dlog(const Dual& x) { return chain(std::log(x.v), x, 1.0 / x.v); }
double dlog1p(double x) { return std::log1p(x); }
Dual dlog1p(const Dual& x) { return chain(std::log1p(x.v), x, 1.0 / (1.0 + x.v)); }
double dexp(double x) { return std::exp(x); }
Dual dexp(const Dual& x) {
  const double e = std::exp(x.v);
  return chain(e, x, e);
}
double dsigmoid(double x) { return sigmoid(x); }
Dual dsigmoid(const Dual& x) {
  const double s = sigmoid(x.v);
  return chain(s, x, s * (1.0 - s));
}
double dlog_sigmoid(double x) { return -softplus(-x); }
Dual dlog_sigmoid(const Dual& x) { return chain(-softplus(-x.v), x, sigmoid(-x.v)); }

// log(exp(a) + exp(b))
template <class S>
S lse2(const S& a, const S& b) {
  if (val(a) >= val(b)) return a + dlog1p(dexp(b - a));
  return b + dlog1p(dexp(a - b));
}

template <class S>
struct Exceedance {
  bool exceeds = false;
  S w{};       // log Z(x)
  S log_dz{};  // log dZ/dx
  S log_h{};   // log GPD density of the residual
};

template <class S>
Exceedance<S> transform(double y, const S& sigma, const S& eta, double log_rate) {
  Exceedance<S> e;
  if (!(y > 0.0)) return e;
  e.exceeds = true;
  const S l1 = dlog1p(eta * y / sigma);
  const S log_sigma = dlog(sigma);
  e.w = l1 / eta - log_rate;
  e.log_dz = e.w - log_sigma - l1;
  e.log_h = -log_sigma - (1.0 / eta + 1.0) * l1;
  return e;
}

template <class S>
struct PairTerms {
  S alpha, inv_alpha, log_alpha, log1m_alpha;
  double log_rate = 0.0;
  S r00{};
  bool r00_ok = true;
};

template <class S>
PairTerms<S> pair_terms(const S& a_star, double rate) {
  PairTerms<S> p;
  p.alpha = dsigmoid(a_star);
  p.inv_alpha = 1.0 / p.alpha;
  p.log_alpha = dlog_sigmoid(a_star);
  p.log1m_alpha = dlog_sigmoid(-a_star);
  p.log_rate = std::log(rate);
  // F(u+, u+) = 1 - 2^alpha * rate
  const S mass = dexp(p.alpha * kLn2 + p.log_rate);
  p.r00_ok = val(mass) < 1.0;
  if (p.r00_ok) p.r00 = dlog1p(-mass);
  return p;
}

template <class S>
S pair_log_density(const Exceedance<S>& a, const Exceedance<S>& b, const PairTerms<S>& p, bool& ok) {
  const S w0 = S(-p.log_rate);
  if (a.exceeds && b.exceeds) {
    if (!(val(p.log1m_alpha) > kNegInf)) {
      ok = false;
      return S(0.0);
    }
    const S ls = lse2(-p.inv_alpha * a.w, -p.inv_alpha * b.w);
    return p.log1m_alpha - p.log_alpha + (p.alpha - 2.0) * ls + (-p.inv_alpha - 1.0) * (a.w + b.w) + a.log_dz +
           b.log_dz;
  }
  if (a.exceeds || b.exceeds) {
    const Exceedance<S>& e = a.exceeds ? a : b;
    const S ls = lse2(-p.inv_alpha * e.w, -p.inv_alpha * w0);
    return (p.alpha - 1.0) * ls + (-p.inv_alpha - 1.0) * e.w + e.log_dz;
  }
  if (!p.r00_ok) ok = false;
  return p.r00;
}

template <class S>
S cell_log_lik(const WindCell& cell, const S& sigma, const S& eta, const S& a_star) {
  const auto terms = pair_terms(a_star, cell.rate);
  const double log_nonexceed = std::log1p(-cell.rate);
  const std::size_t n = cell.x.size();
  std::vector<Exceedance<S>> obs(n);
  for (std::size_t t = 0; t < n; ++t) obs[t] = transform(cell.x[t] - cell.threshold, sigma, eta, terms.log_rate);
  auto marginal = [&](const Exceedance<S>& e) { return e.exceeds ? e.log_h : S(log_nonexceed); };
  S total = marginal(obs[0]);
  bool ok = true;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    total = total + pair_log_density(obs[t], obs[t + 1], terms, ok) - marginal(obs[t]);
    if (!ok) return S(kNegInf);
  }
  if (!std::isfinite(val(total))) return S(kNegInf);
  return total;
}

template <class T>
T t_prior(const T& x, double nu) {
  return student_t_log_pdf<T>(x, nu);
}

}  // namespace

// ---------------------------------------------------------------------------

double WindParams::sigma(int j, int s) const { return softplus(gamma_sigma.at(j)) + softplus(eps_sigma.at(s)); }
double WindParams::eta(int j, int s) const { return softplus(gamma_eta.at(j)) + softplus(eps_eta.at(s)); }
double WindParams::alpha(int j) const { return sigmoid(a_star.at(j)); }

std::vector<double> WindParams::flatten() const {
  std::vector<double> out;
  out.reserve(kWindDim);
  for (const auto* block : {&gamma_sigma, &eps_sigma, &gamma_eta, &eps_eta, &a_star})
    out.insert(out.end(), block->begin(), block->end());
  return out;
}

WindParams WindParams::unflatten(std::span<const double> theta) {
  if (theta.size() != kWindDim) throw std::invalid_argument("WindParams: expected 20 values");
  WindParams p;
  std::size_t i = 0;
  for (auto* block : {&p.gamma_sigma, &p.eps_sigma, &p.gamma_eta, &p.eps_eta, &p.a_star})
    for (auto& v : *block) v = theta[i++];
  return p;
}

std::vector<std::string> WindParams::names() {
  std::vector<std::string> out;
  for (const char* block : {"gamma_sigma", "eps_sigma", "gamma_eta", "eps_eta", "a_star"})
    for (int i = 1; i <= 4; ++i) out.push_back(std::string(block) + "_" + std::to_string(i));
  return out;
}

WindParams reference_wind_params() {
  WindParams p;
  p.gamma_sigma = {0.5, 1.0, 0.0, 1.5};
  p.eps_sigma = {0.2, -0.3, 0.8, 0.0};
  p.gamma_eta = {-2.5, -2.0, -1.8, -2.2};
  p.eps_eta = {-2.0, -2.6, -1.9, -2.3};
  p.a_star = {-0.5, 0.4, 1.0, 0.0};
  return p;
}

void WindDataset::refresh_rates() {
  for (auto& c : cells) {
    const auto hits = std::count_if(c.x.begin(), c.x.end(), [&](double v) { return v > c.threshold; });
    c.rate = c.x.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(c.x.size());
  }
}

void WindDataset::validate() const {
  if (cells.size() != static_cast<std::size_t>(kStations * kSeasons))
    throw WindDataError("wind dataset: expected 16 station-season cells, got " + std::to_string(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const std::string where = "cell (station " + std::to_string(c.station + 1) + ", season " +
                              std::to_string(c.season + 1) + ")";
    if (c.station * kSeasons + c.season != static_cast<int>(i))
      throw WindDataError("wind dataset: " + where + " stored out of order");
    if (!std::isfinite(c.threshold)) throw WindDataError("wind dataset: non-finite threshold in " + where);
    if (c.x.size() < 2) throw WindDataError("wind dataset: fewer than 2 days in " + where);
    for (double v : c.x)
      if (!std::isfinite(v)) throw WindDataError("wind dataset: non-finite speed in " + where);
    if (!(c.rate > 0.0 && c.rate < 0.5))
      throw WindDataError("wind dataset: exceedance rate " + std::to_string(c.rate) + " outside (0, 0.5) in " +
                          where);
  }
}

double gpd_cdf(double y, double sigma, double eta) {
  if (y <= 0.0) return 0.0;
  return -std::expm1(-std::log1p(eta * y / sigma) / eta);
}

double gpd_log_pdf(double y, double sigma, double eta) {
  if (y < 0.0) return kNegInf;
  return -std::log(sigma) - (1.0 / eta + 1.0) * std::log1p(eta * y / sigma);
}

double wind_cell_log_lik(const WindCell& cell, double sigma, double eta, double a_star) {
  return cell_log_lik<double>(cell, sigma, eta, a_star);
}

double wind_cell_log_lik_grad(const WindCell& cell, double sigma, double eta, double a_star,
                              std::array<double, 3>& grad) {
  const Dual r = cell_log_lik<Dual>(cell, Dual::seed(sigma, 0), Dual::seed(eta, 1), Dual::seed(a_star, 2));
  grad = std::isfinite(r.v) ? r.d : std::array<double, 3>{};
  return r.v;
}

double wind_pair_log_density(double y1, double y2, double sigma, double eta, double alpha, double rate) {
  const double a_star = std::log(alpha) - std::log1p(-alpha);
  const auto terms = pair_terms<double>(alpha >= 1.0 ? std::numeric_limits<double>::infinity() : a_star, rate);
  const double log_rate = std::log(rate);
  bool ok = true;
  const double v = pair_log_density(transform(y1, sigma, eta, log_rate), transform(y2, sigma, eta, log_rate), terms, ok);
  return ok ? v : kNegInf;
}

template <class T>
T wind_log_posterior(std::span<const T> theta, const WindDataset& data) {
  if (theta.size() != kWindDim) throw std::invalid_argument("wind_log_posterior: expected 20 parameters");
  std::array<T, kStations * kSeasons> sig, et;
  for (int j = 0; j < kStations; ++j) {
    for (int s = 0; s < kSeasons; ++s) {
      sig[j * kSeasons + s] = sc::softplus(theta[j]) + sc::softplus(theta[4 + s]);
      et[j * kSeasons + s] = sc::softplus(theta[8 + j]) + sc::softplus(theta[12 + s]);
    }
  }
  constexpr int kCells = kStations * kSeasons;
  std::array<double, kCells> value{};
  std::array<std::array<double, 3>, kCells> grad{};
#pragma omp parallel for schedule(static)
  for (int c = 0; c < kCells; ++c) {
    const auto& cell = data.cells[static_cast<std::size_t>(c)];
    const double a = sc::value(theta[16 + c / kSeasons]);
    if constexpr (std::is_same_v<T, ad::Var>) {
      value[c] = wind_cell_log_lik_grad(cell, sig[c].v, et[c].v, a, grad[c]);
    } else {
      value[c] = wind_cell_log_lik(cell, sig[c], et[c], a);
    }
  }
  T total = T(0.0);
  for (int c = 0; c < kCells; ++c) {
    if (!std::isfinite(value[c])) return T(kNegInf);
    if constexpr (std::is_same_v<T, ad::Var>) {
      const ad::Var inputs[3] = {sig[c], et[c], theta[16 + c / kSeasons]};
      total = total + ad::custom(value[c], inputs, grad[c]);
    } else {
      total = total + value[c];
    }
  }
  for (int i = 0; i < 8; ++i) total = total + t_prior<T>(theta[i], 10.0);
  for (int i = 8; i < 16; ++i) total = total + t_prior<T>(theta[i], 3.0);
  for (int i = 16; i < 20; ++i) total = total + sc::log_sigmoid(theta[i]) + sc::log_sigmoid(-theta[i]);
  return total;
}

template double wind_log_posterior<double>(std::span<const double>, const WindDataset&);
template ad::Var wind_log_posterior<ad::Var>(std::span<const ad::Var>, const WindDataset&);

WindTarget::WindTarget(WindDataset data) : data_(std::move(data)) { data_.validate(); }

// ---------------------------------------------------------------------------
// Simulation

namespace {

// log(expm1(x)) for x > 0 without overflow.
double log_expm1(double x) { return x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x)); }

// Residual y > 0 with log Z(u + y) = w.
double residual_from_w(double w, double sigma, double eta, double log_rate) {
  const double y = sigma / eta * std::expm1(eta * (w + log_rate));
  return std::max(y, std::numeric_limits<double>::min());
}

}  // namespace

WindDataset simulate_wind(const WindParams& params, std::size_t days_per_cell, const RngStream& rng,
                          const WindSimulation& setup) {
  if (days_per_cell < 30) throw std::invalid_argument("simulate_wind: need at least 30 days per cell");
  if (!(setup.rate > 0.0 && setup.rate < 0.5)) throw std::invalid_argument("simulate_wind: rate must be in (0, 0.5)");
  WindDataset data;
  const double lam = setup.rate;
  const double log_rate = std::log(lam);
  for (int j = 0; j < kStations; ++j) {
    const double alpha = params.alpha(j);
    for (int s = 0; s < kSeasons; ++s) {
      WindCell cell;
      cell.station = j;
      cell.season = s;
      cell.threshold = setup.threshold(j, s);
      const double u = cell.threshold;
      const double sigma = params.sigma(j, s), eta = params.eta(j, s);
      RngStream stream = rng.split("wind-cell", static_cast<std::uint64_t>(j * kSeasons + s));
      auto below = [&] { return u * (0.4 + 0.6 * stream.uniform()); };
      // probability of staying below the threshold after a non-exceedance
      const double stay = -std::expm1(alpha * kLn2 + log_rate) / (1.0 - lam);
      cell.x.reserve(days_per_cell);
      double w = 0.0;  // log Z of the previous day when it exceeded
      bool exceeded = stream.uniform() < lam;
      if (exceeded) {
        const double y = sigma / eta * std::expm1(-eta * std::log(stream.uniform()));
        cell.x.push_back(u + y);
        w = std::log1p(eta * y / sigma) / eta - log_rate;
      } else {
        cell.x.push_back(below());
      }
      for (std::size_t t = 1; t < days_per_cell; ++t) {
        const double U = stream.uniform();
        bool next = false;
        double w_next = 0.0;
        if (exceeded) {
          // conditional CDF in z2 is z1^(1 - 1/alpha) * (z1^(-1/alpha) + z2^(-1/alpha))^(alpha - 1)
          if (alpha < 1.0) {
            const double ls = std::max(-w / alpha, log_rate / alpha) +
                              std::log1p(std::exp(-std::abs(-w / alpha - log_rate / alpha)));
            const double log_stay = (1.0 - 1.0 / alpha) * w + (alpha - 1.0) * ls;
            if (std::log(U) > log_stay) {
              next = true;
              w_next = w - alpha * log_expm1(-std::log(U) / (1.0 - alpha));
            }
          }
        } else if (U >= stay) {
          next = true;
          const double v = 1.0 - U * (1.0 - lam);  // V(1/lam, z2) in (lam, 2^alpha lam]
          const double diff = std::pow(v, 1.0 / alpha) - std::pow(lam, 1.0 / alpha);
          w_next = -alpha * std::log(diff);
        }
        if (next) {
          const double y = residual_from_w(w_next, sigma, eta, log_rate);
          cell.x.push_back(u + y);
          w = std::log1p(eta * y / sigma) / eta - log_rate;
        } else {
          cell.x.push_back(below());
        }
        exceeded = next;
      }
      data.cells.push_back(std::move(cell));
    }
  }
  data.refresh_rates();
  return data;
}

// ---------------------------------------------------------------------------
// CSV

const ThresholdRule& ThresholdConfig::rule(int j, int s) const {
  const auto it = per_cell.find({j, s});
  return it == per_cell.end() ? fallback : it->second;
}

double quantile_type1(std::vector<double> xs, double p) {
  if (xs.empty()) throw std::invalid_argument("quantile_type1: empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("quantile_type1: p must be in (0, 1]");
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  auto k = static_cast<std::size_t>(std::ceil(n * p - 1e-12));
  k = std::clamp<std::size_t>(k, 1, xs.size());
  return xs[k - 1];
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class N>
bool parse_number(const std::string& field, N& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::map<std::pair<int, int>, std::vector<double>> read_wind_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw WindDataError("cannot open wind CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != "station,season,day,speed")
    throw WindDataError(path + ": line 1: expected header 'station,season,day,speed'");
  std::map<std::pair<int, int>, std::vector<std::pair<long, double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    const std::string where = path + ": line " + std::to_string(lineno);
    int station = 0, season = 0;
    long day = 0;
    double speed = 0.0;
    if (fields.size() != 4 || !parse_number(fields[0], station) || !parse_number(fields[1], season) ||
        !parse_number(fields[2], day) || !parse_number(fields[3], speed))
      throw WindDataError(where + ": malformed row '" + trim(line) + "'");
    if (station < 1 || station > kStations || season < 1 || season > kSeasons)
      throw WindDataError(where + ": station and season must be in 1..4");
    if (!std::isfinite(speed)) throw WindDataError(where + ": non-finite speed");
    rows[{station - 1, season - 1}].emplace_back(day, speed);
  }
  std::map<std::pair<int, int>, std::vector<double>> out;
  for (auto& [key, series] : rows) {
    std::stable_sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < series.size(); ++i) {
      if (series[i].first == series[i - 1].first)
        throw WindDataError(path + ": duplicate day " + std::to_string(series[i].first) + " in cell (station " +
                            std::to_string(key.first + 1) + ", season " + std::to_string(key.second + 1) + ")");
    }
    auto& xs = out[key];
    for (const auto& row : series) xs.push_back(row.second);
  }
  return out;
}

WindDataset ingest_wind_csv(const std::string& path, const ThresholdConfig& thresholds) {
  auto rows = read_wind_rows(path);
  WindDataset data;
  for (int j = 0; j < kStations; ++j) {
    for (int s = 0; s < kSeasons; ++s) {
      auto it = rows.find({j, s});
      if (it == rows.end())
        throw WindDataError(path + ": missing cell (station " + std::to_string(j + 1) + ", season " +
                            std::to_string(s + 1) + ")");
      WindCell cell;
      cell.station = j;
      cell.season = s;
      cell.x = std::move(it->second);
      const auto& rule = thresholds.rule(j, s);
      cell.threshold = rule.kind == ThresholdRule::Kind::absolute ? rule.value : quantile_type1(cell.x, rule.value);
      data.cells.push_back(std::move(cell));
    }
  }
  data.refresh_rates();
  data.validate();
  return data;
}

void write_wind_csv(const std::string& path, const WindDataset& data) {
  std::ofstream out(path);
  if (!out) throw WindDataError("cannot write wind CSV '" + path + "'");
  out << "station,season,day,speed\n";
  char buf[64];
  for (const auto& c : data.cells) {
    for (std::size_t t = 0; t < c.x.size(); ++t) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, c.x[t]);
      out << c.station + 1 << ',' << c.season + 1 << ',' << t + 1 << ',' << std::string_view(buf, end - buf) << '\n';
    }
  }
}

}  // namespace stictaf
