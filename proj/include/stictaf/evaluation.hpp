#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/tail_estimator.hpp"
#include "stictaf/targets.hpp"
#include "stictaf/vi_engine.hpp"

namespace stictaf {

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KlEstimate {
  double value = 0.0;
  double term_sd = 0.0;  // sample sd of log p - log q; MC standard error is term_sd / sqrt(n)
  std::size_t n = 0;
};

// Forward KL(p || q) by Monte Carlo over exact target draws. Requires a
// normalized target with a sampler.
KlEstimate forward_kl(const TargetDensity& target, const StictafModel& model, std::size_t n, const RngStream& rng,
                      bool parallel = true);

// (sum w)^2 / (n sum w^2) from log importance weights; -inf entries are zero
// weights. Throws EvaluationError when every weight is zero.
double normalized_ess_from_log_weights(std::span<const double> log_w);

// Importance weights p/q at n model draws; logp may be unnormalized.
double normalized_ess(const LogDensity& logp, const StictafModel& model, std::size_t n, const RngStream& rng,
                      bool parallel = true);

struct PercentileTable {
  std::vector<double> probs;
  std::vector<std::vector<double>> values;  // values[coordinate][prob]
};

// Type-7 empirical quantiles per coordinate. Needs at least 10 / min(p, 1 - p)
// samples for the most extreme probability.
PercentileTable percentile_table(const Samples& samples, std::span<const double> probs);

struct MomentSummary {
  std::vector<double> mean;
  std::vector<double> sd;
};
MomentSummary sample_moments(const Samples& samples);

struct DiagnosticsReport {
  std::optional<double> kl_mean, kl_sd;
  double ess_mean = 0.0, ess_sd = 0.0;
  std::vector<double> kl_per_seed, ess_per_seed;
  PercentileTable percentiles;
  std::size_t n = 0;
  std::size_t seeds = 0;
  std::uint64_t seed = 0;
};

// Forward KL (when the target has an exact sampler and normalizer) and
// normalized ESS over `seeds` replicates of n draws each, plus marginal
// 0.1% / 99.9% percentiles of max(n, 10^4) model draws.
DiagnosticsReport diagnose(const TargetDensity& target, const StictafModel& model, std::size_t n, std::size_t seeds,
                           std::uint64_t seed, bool parallel = true);

struct McmcOptions {
  double initial_scale = 0.1;       // proposal sd per coordinate before adaptation
  std::size_t adapt_start = 0;      // 0 means max(100, 2 d)
  std::size_t max_rejections = 10000;
  std::size_t snapshot_interval = 1000;
  double epsilon = 1e-8;
};

struct McmcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct McmcChain {
  Samples draws;  // T x d, including burn-in
  std::vector<double> logp;
  double acceptance_rate = 0.0;
  std::vector<double> proposal_trace;  // trace of the proposal covariance at each snapshot
};

// Adaptive random-walk Metropolis: proposal N(0, s_d * Sigma_t + eps * I) with
// s_d = 2.38^2 / d and Sigma_t the running covariance of the chain, updated
// recursively with weight 1/t.
McmcChain adaptive_rwm(const LogDensity& logp, std::span<const double> init, std::size_t T, RngStream& rng,
                       const McmcOptions& opt = {});

struct ChainSummary {
  std::vector<double> mode;  // retained draw with the largest logp
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> lower;  // 0.5% quantile
  std::vector<double> upper;  // 99.5% quantile
  std::size_t retained = 0;
};

// Discards the first half of the chain, then summarizes.
ChainSummary summarize_chain(const McmcChain& chain, double level = 0.99);

}  // namespace stictaf
