#include "stictaf/tail_transform.hpp"

#include <algorithm>
#include <cmath>

namespace stictaf {

namespace {
constexpr double kLogSqrt2OverPi = -0.22579135264472743;  // log sqrt(2 / pi)
constexpr double kExpLimit = 709.0;
}  // namespace

TtfParams TtfParams::identity(int d) {
  TtfParams p;
  p.mu.assign(d, 0.0);
  p.sigma.assign(d, 1.0);
  p.xi_pos.assign(d, std::nullopt);
  p.xi_neg.assign(d, std::nullopt);
  return p;
}

bool TtfParams::is_identity() const {
  for (std::size_t l = 0; l < mu.size(); ++l) {
    if (xi_pos[l] || xi_neg[l]) return false;
  }
  return true;
}

void TtfParams::validate() const {
  const std::size_t d = mu.size();
  if (sigma.size() != d || xi_pos.size() != d || xi_neg.size() != d)
    throw std::invalid_argument("TtfParams: inconsistent dimensions");
  for (std::size_t l = 0; l < d; ++l) {
    if (!(sigma[l] > 0.0) || !std::isfinite(sigma[l]) || !std::isfinite(mu[l]))
      throw std::invalid_argument("TtfParams: invalid location/scale at coordinate " + std::to_string(l));
    for (const auto& xi : {xi_pos[l], xi_neg[l]}) {
      if (xi && !(*xi >= kXiMin && *xi <= kXiCap))
        throw std::invalid_argument("TtfParams: tail index outside [xi_min, xi_cap] at coordinate " +
                                    std::to_string(l));
    }
  }
}

template <class T>
T ttf_scalar_forward(const T& z, double mu, double sigma, const TailIndex& pos, const TailIndex& neg,
                     T* log_deriv, int coordinate) {
  const double zv = sc::value(z);
  const double s = zv >= mu ? 1.0 : -1.0;
  const TailIndex& xi = s > 0 ? pos : neg;
  if (!xi) {
    if (log_deriv) *log_deriv = T(0.0);
    return z;
  }
  const double lambda = 1.0 / *xi;
  const T r = (z - mu) / sigma;
  // s * r = |r| without a kink in the recorded graph.
  const T u = (s / kSqrt2) * r;
  const T le = sc::log_erfc(u);
  if (-lambda * sc::value(le) > kExpLimit)
    throw SaturationError("ttf: forward map saturates at coordinate " + std::to_string(coordinate),
                          coordinate);
  if (log_deriv) *log_deriv = kLogSqrt2OverPi - 0.5 * r * r - (lambda + 1.0) * le;
  return mu + (sigma * s * *xi) * sc::expm1(-lambda * le);
}

template <class T>
T ttf_scalar_inverse(const T& x, double mu, double sigma, const TailIndex& pos, const TailIndex& neg,
                     T* log_deriv, int coordinate) {
  const double xv = sc::value(x);
  if (!std::isfinite(xv))
    throw DomainError("ttf: inverse of a non-finite value at coordinate " + std::to_string(coordinate));
  const double s = xv >= mu ? 1.0 : -1.0;
  const TailIndex& xi = s > 0 ? pos : neg;
  if (!xi) {
    if (log_deriv) *log_deriv = T(0.0);
    return x;
  }
  const double lambda = 1.0 / *xi;
  const T t = (x - mu) / sigma;
  const T arg = (s * lambda) * t;  // 1 + arg > 0 on the whole image
  if (!(1.0 + sc::value(arg) > 0.0))
    throw DomainError("ttf: point outside the image at coordinate " + std::to_string(coordinate));
  const T log_e = -*xi * sc::log1p(arg);
  const T ustar = sc::erfcinv_log(log_e);
  if (log_deriv) *log_deriv = -kLogSqrt2OverPi + (lambda + 1.0) * log_e + ustar * ustar;
  return mu + (sigma * s * kSqrt2) * ustar;
}

template <class T>
TtfResult<T> ttf_forward(const TtfParams& p, std::span<const T> z) {
  const int d = p.dim();
  if (static_cast<int>(z.size()) != d) throw std::invalid_argument("ttf_forward: dimension mismatch");
  TtfResult<T> out{std::vector<T>(d), T(0.0)};
  for (int l = 0; l < d; ++l) {
    T ld = T(0.0);
    out.x[l] = ttf_scalar_forward<T>(z[l], p.mu[l], p.sigma[l], p.xi_pos[l], p.xi_neg[l], &ld, l);
    if (p.xi_pos[l] || p.xi_neg[l]) out.log_det = out.log_det + ld;
  }
  return out;
}

template <class T>
TtfResult<T> ttf_inverse(const TtfParams& p, std::span<const T> x) {
  const int d = p.dim();
  if (static_cast<int>(x.size()) != d) throw std::invalid_argument("ttf_inverse: dimension mismatch");
  TtfResult<T> out{std::vector<T>(d), T(0.0)};
  for (int l = 0; l < d; ++l) {
    T ld = T(0.0);
    out.x[l] = ttf_scalar_inverse<T>(x[l], p.mu[l], p.sigma[l], p.xi_pos[l], p.xi_neg[l], &ld, l);
    if (p.xi_pos[l] || p.xi_neg[l]) out.log_det = out.log_det + ld;
  }
  return out;
}

template double ttf_scalar_forward<double>(const double&, double, double, const TailIndex&, const TailIndex&, double*, int);
template ad::Var ttf_scalar_forward<ad::Var>(const ad::Var&, double, double, const TailIndex&, const TailIndex&, ad::Var*, int);
template double ttf_scalar_inverse<double>(const double&, double, double, const TailIndex&, const TailIndex&, double*, int);
template ad::Var ttf_scalar_inverse<ad::Var>(const ad::Var&, double, double, const TailIndex&, const TailIndex&, ad::Var*, int);
template TtfResult<double> ttf_forward<double>(const TtfParams&, std::span<const double>);
template TtfResult<ad::Var> ttf_forward<ad::Var>(const TtfParams&, std::span<const ad::Var>);
template TtfResult<double> ttf_inverse<double>(const TtfParams&, std::span<const double>);
template TtfResult<ad::Var> ttf_inverse<ad::Var>(const TtfParams&, std::span<const ad::Var>);

double tail_index_of_pushforward(const TtfParams& p, int coordinate, int sign, std::size_t n,
                                 RngStream& rng, double top_fraction) {
  if (coordinate < 0 || coordinate >= p.dim()) throw std::out_of_range("tail_index_of_pushforward: coordinate");
  const double mu = p.mu[coordinate], sigma = p.sigma[coordinate];
  const double dir = sign >= 0 ? 1.0 : -1.0;
  const auto k = static_cast<std::size_t>(std::max(2.0, std::floor(top_fraction * static_cast<double>(n))));
  std::vector<double> exceed;
  exceed.reserve(n / 2 + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = mu + sigma * rng.normal();
    const double x = ttf_scalar_forward<double>(z, mu, sigma, p.xi_pos[coordinate], p.xi_neg[coordinate],
                                                nullptr, coordinate);
    const double t = dir * (x - mu) / sigma;
    if (t > 0.0) exceed.push_back(t);
  }
  if (exceed.size() <= k) throw DomainError("tail_index_of_pushforward: too few exceedances");
  std::nth_element(exceed.begin(), exceed.begin() + static_cast<std::ptrdiff_t>(k), exceed.end(),
                   std::greater<>());
  const double threshold = exceed[k];
  double hill = 0.0;
  for (std::size_t i = 0; i < k; ++i) hill += std::log(exceed[i] / threshold);
  hill /= static_cast<double>(k);
  return -1.0 / hill;
}

}  // namespace stictaf
