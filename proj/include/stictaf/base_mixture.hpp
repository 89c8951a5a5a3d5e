#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "stictaf/numerics.hpp"
#include "stictaf/scalar.hpp"

namespace stictaf {

inline constexpr double kBetaParamFloor = 1e-4;

// Truncated generalized stick-breaking mixture of diagonal Gaussians.
// raw_alpha / raw_beta hold K - 1 unconstrained stick parameters.
struct StickBreakingBase {
  int K = 1;
  int d = 1;
  std::vector<std::vector<double>> mu;         // K x d
  std::vector<std::vector<double>> log_sigma;  // K x d
  std::vector<double> raw_alpha;               // K - 1
  std::vector<double> raw_beta;                // K - 1

  // Standard-normal components with equal expected weights.
  static StickBreakingBase uniform(int K, int d);

  void validate() const;
  std::vector<double> alpha() const;
  std::vector<double> beta() const;
};

// log of the expected stick-breaking weights; last component takes the
// remainder so the weights form an exact simplex.
template <class T>
std::vector<T> expected_log_weights(std::span<const T> raw_alpha, std::span<const T> raw_beta) {
  const std::size_t K = raw_alpha.size() + 1;
  std::vector<T> out(K);
  T rest = T(0.0);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const T a = sc::softplus(raw_alpha[k]) + kBetaParamFloor;
    const T b = sc::softplus(raw_beta[k]) + kBetaParamFloor;
    const T log_ab = sc::log(a + b);
    out[k] = rest + sc::log(a) - log_ab;
    rest = rest + sc::log(b) - log_ab;
  }
  out[K - 1] = rest;
  return out;
}

std::vector<double> expected_weights(const StickBreakingBase& base);

template <class T>
T diag_gaussian_log_density(std::span<const T> mu, std::span<const T> log_sigma,
                            std::span<const T> z) {
  T acc = T(0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T r = (z[i] - mu[i]) * sc::exp(-log_sigma[i]);
    acc = acc - 0.5 * r * r - log_sigma[i];
  }
  return acc - kLogSqrt2Pi * static_cast<double>(z.size());
}

struct ComponentDraws {
  std::vector<std::vector<double>> z;    // n x d
  std::vector<std::vector<double>> eps;  // n x d standard-normal noise
};

ComponentDraws component_sample(const StickBreakingBase& base, int k, std::size_t n,
                                RngStream& rng);
double component_log_density(const StickBreakingBase& base, int k, std::span<const double> z);
double mixture_log_density(const StickBreakingBase& base, std::span<const double> z);

using LogDensityFn = std::function<double(std::span<const double>)>;

// Places component means at the K best of 4K candidates drawn uniformly from
// a ball around the origin, ranked by the target log-density. Sets all
// log-scales to zero.
void initialize_means(StickBreakingBase& base, const LogDensityFn& logp, RngStream& rng,
                      double radius = 5.0);

}  // namespace stictaf
