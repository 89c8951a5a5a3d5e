#include "stictaf/base_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stictaf {

StickBreakingBase StickBreakingBase::uniform(int K, int d) {
  if (K < 1 || d < 1) throw std::invalid_argument("StickBreakingBase: K and d must be positive");
  StickBreakingBase b;
  b.K = K;
  b.d = d;
  b.mu.assign(K, std::vector<double>(d, 0.0));
  b.log_sigma.assign(K, std::vector<double>(d, 0.0));
  // alpha_k = 1, beta_k = K - k - 1 gives E[pi_k] = 1/K for every k.
  for (int k = 0; k + 1 < K; ++k) {
    b.raw_alpha.push_back(softplus_inv(1.0 - kBetaParamFloor));
    b.raw_beta.push_back(softplus_inv(static_cast<double>(K - k - 1) - kBetaParamFloor));
  }
  return b;
}

void StickBreakingBase::validate() const {
  if (K < 1 || d < 1) throw std::invalid_argument("StickBreakingBase: K and d must be positive");
  if (static_cast<int>(mu.size()) != K || static_cast<int>(log_sigma.size()) != K)
    throw std::invalid_argument("StickBreakingBase: mu/log_sigma must have K rows");
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(mu[k].size()) != d || static_cast<int>(log_sigma[k].size()) != d)
      throw std::invalid_argument("StickBreakingBase: row " + std::to_string(k) + " has wrong length");
    for (int i = 0; i < d; ++i) {
      if (!std::isfinite(mu[k][i]) || !std::isfinite(log_sigma[k][i]))
        throw std::invalid_argument("StickBreakingBase: non-finite parameter in component " +
                                    std::to_string(k));
    }
  }
  if (static_cast<int>(raw_alpha.size()) != K - 1 || static_cast<int>(raw_beta.size()) != K - 1)
    throw std::invalid_argument("StickBreakingBase: need K - 1 stick parameters");
}

std::vector<double> StickBreakingBase::alpha() const {
  std::vector<double> a;
  for (double r : raw_alpha) a.push_back(softplus(r) + kBetaParamFloor);
  return a;
}

std::vector<double> StickBreakingBase::beta() const {
  std::vector<double> b;
  for (double r : raw_beta) b.push_back(softplus(r) + kBetaParamFloor);
  return b;
}

std::vector<double> expected_weights(const StickBreakingBase& base) {
  auto lw = expected_log_weights<double>(base.raw_alpha, base.raw_beta);
  std::vector<double> w(lw.size());
  std::transform(lw.begin(), lw.end(), w.begin(), [](double x) { return std::exp(x); });
  return w;
}

ComponentDraws component_sample(const StickBreakingBase& base, int k, std::size_t n,
                                RngStream& rng) {
  if (k < 0 || k >= base.K) throw std::out_of_range("component_sample: index out of range");
  ComponentDraws out;
  out.z.resize(n);
  out.eps.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.eps[s].resize(base.d);
    out.z[s].resize(base.d);
    for (int i = 0; i < base.d; ++i) {
      const double e = rng.normal();
      out.eps[s][i] = e;
      out.z[s][i] = base.mu[k][i] + std::exp(base.log_sigma[k][i]) * e;
    }
  }
  return out;
}

double component_log_density(const StickBreakingBase& base, int k, std::span<const double> z) {
  if (k < 0 || k >= base.K) throw std::out_of_range("component_log_density: index out of range");
  return diag_gaussian_log_density<double>(base.mu[k], base.log_sigma[k], z);
}

double mixture_log_density(const StickBreakingBase& base, std::span<const double> z) {
  auto lw = expected_log_weights<double>(base.raw_alpha, base.raw_beta);
  std::vector<double> terms(base.K);
  for (int k = 0; k < base.K; ++k) terms[k] = lw[k] + component_log_density(base, k, z);
  return log_sum_exp(terms);
}

void initialize_means(StickBreakingBase& base, const LogDensityFn& logp, RngStream& rng,
                      double radius) {
  const int n_cand = 4 * base.K;
  std::vector<std::vector<double>> cand(n_cand, std::vector<double>(base.d));
  std::vector<double> score(n_cand);
  for (int c = 0; c < n_cand; ++c) {
    // Uniform in the d-ball: Gaussian direction, radius ~ R * U^(1/d).
    double norm2 = 0.0;
    for (auto& x : cand[c]) {
      x = rng.normal();
      norm2 += x * x;
    }
    const double r = radius * std::pow(rng.uniform(), 1.0 / base.d) / std::sqrt(norm2);
    for (auto& x : cand[c]) x *= r;
    const double lp = logp(cand[c]);
    score[c] = std::isnan(lp) ? -std::numeric_limits<double>::infinity() : lp;
  }
  std::vector<int> order(n_cand);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  for (int k = 0; k < base.K; ++k) {
    base.mu[k] = cand[order[k]];
    std::fill(base.log_sigma[k].begin(), base.log_sigma[k].end(), 0.0);
  }
}

}  // namespace stictaf
