#include "stictaf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace stictaf {

namespace {

constexpr double kCfSwitch = 5.0;

// Continued fraction for erfcx, evaluated bottom-up. Used for x >= 5 where
// 60 terms are well past convergence.
double erfcx_cf(double x) {
  double f = x;
  for (int k = 60; k >= 1; --k) f = x + (0.5 * k) / f;
  return 1.0 / (kSqrtPi * f);
}

}  // namespace

double erfc(double x) { return std::erfc(x); }

double erfcx(double x) {
  if (x < kCfSwitch) {
    if (x < -26.0) return std::numeric_limits<double>::infinity();
    return std::exp(x * x) * std::erfc(x);
  }
  return erfcx_cf(x);
}

double log_erfc(double x) {
  if (x < kCfSwitch) return std::log(std::erfc(x));
  return std::log(erfcx_cf(x)) - x * x;
}

double erfcinv_log(double log_p) {
  if (std::isnan(log_p) || log_p >= kLn2)
    throw DomainError("erfcinv_log: argument must be below log 2");
  if (log_p == -std::numeric_limits<double>::infinity())
    return std::numeric_limits<double>::infinity();
  if (log_p > 0.0) {
    // erfc(-x) = 2 - erfc(x)
    const double q = kLn2 + std::log(-std::expm1(log_p - kLn2));
    return -erfcinv_log(q);
  }
  // Starting guess from the leading tail asymptotics.
  double x = 0.0;
  if (log_p < -1.0) {
    x = std::sqrt(-log_p);
    const double refined = -log_p - std::log(kSqrtPi * x);
    if (refined > 0.0) x = std::sqrt(refined);
  }
  // log erfc is concave and decreasing, so Newton converges monotonically
  // once an iterate lands right of the root.
  for (int it = 0; it < 100; ++it) {
    const double g = log_erfc(x) - log_p;
    const double dg = -2.0 / (kSqrtPi * erfcx(x));
    const double step = g / dg;
    x -= step;
    if (x < 0.0) x = 0.0;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

double erfcinv(double p) {
  if (!(p > 0.0 && p < 2.0)) throw DomainError("erfcinv: argument must lie in (0, 2)");
  if (p <= 1.0) return erfcinv_log(std::log(p));
  return -erfcinv_log(std::log(2.0 - p));
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inv(double y) {
  if (!(y > 0.0)) throw DomainError("softplus_inv: argument must be positive");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double student_t_log_density(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * kPi) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t h) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double RngStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * kPi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  // Marsaglia and Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw DomainError("index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

RngStream RngStream::split(std::string_view purpose, std::uint64_t idx) const {
  std::uint64_t h = fnv1a64(purpose);
  h = mix64(h ^ mix64(stream_id_ + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ mix64(idx + 0x2545f4914f6cdd1dULL));
  return RngStream(seed_, h);
}

double student_t_draw(double nu, RngStream& rng) {
  if (!(nu > 0.0)) throw DomainError("student_t_draw: nu must be positive");
  const double z = rng.normal();
  const double chi2 = 2.0 * rng.gamma(0.5 * nu);
  return z / std::sqrt(chi2 / nu);
}

OrderedMagnitudes top_magnitudes(std::span<const double> xs, std::size_t j) {
  if (j == 0) throw DomainError("top_magnitudes: j must be positive");
  if (xs.size() < j + 1) throw DomainError("top_magnitudes: need at least j + 1 samples");
  const std::size_t m = j + 1;
  using Entry = std::pair<double, std::size_t>;
  // "better" = larger magnitude, then lower index.
  auto better = [](const Entry& a, const Entry& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  // Min-heap by "better": top is the worst retained entry.
  std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Entry e{std::abs(xs[i]), i};
    if (heap.size() < m) {
      heap.push(e);
    } else if (better(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<Entry> kept;
  kept.reserve(m);
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::reverse(kept.begin(), kept.end());
  OrderedMagnitudes out;
  for (const auto& [v, i] : kept) {
    out.values.push_back(v);
    out.source_indices.push_back(i);
  }
  return out;
}

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile: probability outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace stictaf
