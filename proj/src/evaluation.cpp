#include "stictaf/evaluation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stictaf {

namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sd_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

template <class F>
void for_each_index(std::size_t n, bool parallel, F&& f) {
  const auto total = static_cast<std::ptrdiff_t>(n);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < total; ++i) f(static_cast<std::size_t>(i));
  } else {
    for (std::ptrdiff_t i = 0; i < total; ++i) f(static_cast<std::size_t>(i));
  }
}

}  // namespace

KlEstimate forward_kl(const TargetDensity& target, const StictafModel& model, std::size_t n, const RngStream& rng,
                      bool parallel) {
  if (!target.has_sampler() || !target.normalized())
    throw EvaluationError("forward_kl: target '" + target.name() + "' has no exact sampler or normalizer");
  if (n < 2) throw EvaluationError("forward_kl: need at least two draws");
  RngStream stream = rng.split("forward-kl");
  const auto xs = target.sample(n, stream);
  std::vector<double> terms(n);
  for_each_index(n, parallel, [&](std::size_t i) {
    terms[i] = target.log_density(xs[i]) - model_log_density(model, xs[i]);
  });
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(terms[i])) throw EvaluationError("forward_kl: target draw outside the model support");
  return {mean_of(terms), sd_of(terms), n};
}

double normalized_ess_from_log_weights(std::span<const double> log_w) {
  if (log_w.empty()) throw EvaluationError("normalized_ess: no weights");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_w) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw EvaluationError("normalized_ess: invalid log weight");
    top = std::max(top, v);
  }
  if (top == -std::numeric_limits<double>::infinity())
    throw EvaluationError("normalized_ess: all importance weights are zero (support mismatch)");
  double s1 = 0.0, s2 = 0.0;
  for (double v : log_w) {
    const double w = std::exp(v - top);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / (static_cast<double>(log_w.size()) * s2);
}

double normalized_ess(const LogDensity& logp, const StictafModel& model, std::size_t n, const RngStream& rng,
                      bool parallel) {
  const auto draws = sample(model, n, rng.split("ess"), parallel);
  std::vector<double> log_w(n);
  for_each_index(n, parallel, [&](std::size_t i) {
    log_w[i] = logp(draws.x[i]) - model_log_density(model, draws.x[i]);
  });
  return normalized_ess_from_log_weights(log_w);
}

PercentileTable percentile_table(const Samples& samples, std::span<const double> probs) {
  if (samples.empty()) throw EvaluationError("percentile_table: no samples");
  if (probs.empty()) throw EvaluationError("percentile_table: no probabilities");
  double extreme = 0.5;
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw EvaluationError("percentile_table: probabilities must lie in (0, 1)");
    extreme = std::min({extreme, p, 1.0 - p});
  }
  const double needed = std::ceil(10.0 / extreme - 1e-9);
  if (static_cast<double>(samples.size()) < needed)
    throw EvaluationError("percentile_table: " + std::to_string(samples.size()) + " samples, need at least " +
                          std::to_string(static_cast<long long>(needed)));
  const std::size_t d = samples.front().size();
  PercentileTable t;
  t.probs.assign(probs.begin(), probs.end());
  t.values.assign(d, {});
  std::vector<double> col(samples.size());
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i].at(l);
    std::sort(col.begin(), col.end());
    for (double p : probs) t.values[l].push_back(quantile_type7(col, p));
  }
  return t;
}

MomentSummary sample_moments(const Samples& samples) {
  if (samples.size() < 2) throw EvaluationError("sample_moments: need at least two samples");
  const std::size_t d = samples.front().size();
  MomentSummary m;
  m.mean.assign(d, 0.0);
  m.sd.assign(d, 0.0);
  std::vector<double> col(samples.size());
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i][l];
    m.mean[l] = mean_of(col);
    m.sd[l] = sd_of(col);
  }
  return m;
}

DiagnosticsReport diagnose(const TargetDensity& target, const StictafModel& model, std::size_t n, std::size_t seeds,
                           std::uint64_t seed, bool parallel) {
  if (n < 2 || seeds < 1) throw EvaluationError("diagnose: need n >= 2 and at least one seed");
  DiagnosticsReport r;
  r.n = n;
  r.seeds = seeds;
  r.seed = seed;
  const RngStream root(seed, 0);
  const bool with_kl = target.has_sampler() && target.normalized();
  const auto logp = target.as_function();
  for (std::size_t s = 0; s < seeds; ++s) {
    const RngStream rep = root.split("evaluate", s);
    if (with_kl) r.kl_per_seed.push_back(forward_kl(target, model, n, rep, parallel).value);
    r.ess_per_seed.push_back(normalized_ess(logp, model, n, rep, parallel));
  }
  if (with_kl) {
    r.kl_mean = mean_of(r.kl_per_seed);
    r.kl_sd = sd_of(r.kl_per_seed);
  }
  r.ess_mean = mean_of(r.ess_per_seed);
  r.ess_sd = sd_of(r.ess_per_seed);
  const auto draws = sample(model, std::max<std::size_t>(n, 10000), root.split("percentiles"), parallel);
  const double probs[] = {0.001, 0.999};
  r.percentiles = percentile_table(draws.x, probs);
  return r;
}

McmcChain adaptive_rwm(const LogDensity& logp, std::span<const double> init, std::size_t T, RngStream& rng,
                       const McmcOptions& opt) {
  const auto d = static_cast<Eigen::Index>(init.size());
  if (d == 0) throw McmcError("adaptive_rwm: empty initial point");
  if (T < 2) throw McmcError("adaptive_rwm: need at least two iterations");
  double cur_lp = logp(init);
  if (!std::isfinite(cur_lp)) throw McmcError("adaptive_rwm: log-density is not finite at the initial point");

  const double sd_scale = 2.38 * 2.38 / static_cast<double>(d);
  const std::size_t adapt_start =
      opt.adapt_start > 0 ? opt.adapt_start : std::max<std::size_t>(100, 2 * static_cast<std::size_t>(d));
  const Eigen::MatrixXd eps_eye = opt.epsilon * Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd cur = Eigen::Map<const Eigen::VectorXd>(init.data(), d);
  Eigen::VectorXd mean = cur;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd chol =
      (opt.initial_scale * opt.initial_scale * Eigen::MatrixXd::Identity(d, d)).llt().matrixL();
  Eigen::MatrixXd proposal_cov = opt.initial_scale * opt.initial_scale * Eigen::MatrixXd::Identity(d, d);

  McmcChain chain;
  chain.draws.reserve(T);
  chain.logp.reserve(T);
  std::size_t accepted = 0, rejected_run = 0;
  Eigen::VectorXd step(d), prop(d);
  std::vector<double> prop_vec(static_cast<std::size_t>(d));

  for (std::size_t t = 1; t <= T; ++t) {
    for (Eigen::Index i = 0; i < d; ++i) step[i] = rng.normal();
    prop = cur + chol * step;
    for (Eigen::Index i = 0; i < d; ++i) prop_vec[static_cast<std::size_t>(i)] = prop[i];
    const double lp = logp(prop_vec);
    if (!std::isnan(lp) && std::log(rng.uniform()) < lp - cur_lp) {
      cur = prop;
      cur_lp = lp;
      ++accepted;
      rejected_run = 0;
    } else if (++rejected_run >= opt.max_rejections) {
      throw McmcError("adaptive_rwm: no acceptance in " + std::to_string(opt.max_rejections) +
                      " consecutive steps (iteration " + std::to_string(t) + ")");
    }
    chain.draws.emplace_back(cur.data(), cur.data() + d);
    chain.logp.push_back(cur_lp);

    // running mean and covariance of states 0..t, each update weighted 1/(t+1)
    const double w = 1.0 / static_cast<double>(t + 1);
    const Eigen::VectorXd delta = cur - mean;
    mean += w * delta;
    cov = (1.0 - w) * cov + w * (1.0 - w) * delta * delta.transpose();

    if (t >= adapt_start) {
      proposal_cov = sd_scale * cov + eps_eye;
      Eigen::LLT<Eigen::MatrixXd> llt(proposal_cov);
      if (llt.info() == Eigen::Success) chol = llt.matrixL();
    }
    if (opt.snapshot_interval > 0 && t % opt.snapshot_interval == 0) chain.proposal_trace.push_back(proposal_cov.trace());
  }
  chain.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(T);
  return chain;
}

ChainSummary summarize_chain(const McmcChain& chain, double level) {
  if (chain.draws.size() < 4) throw McmcError("summarize_chain: chain too short");
  if (!(level > 0.0 && level < 1.0)) throw McmcError("summarize_chain: level must lie in (0, 1)");
  const std::size_t start = chain.draws.size() / 2;
  const Samples kept(chain.draws.begin() + static_cast<std::ptrdiff_t>(start), chain.draws.end());
  ChainSummary s;
  s.retained = kept.size();
  const auto best = std::max_element(chain.logp.begin() + static_cast<std::ptrdiff_t>(start), chain.logp.end());
  s.mode = chain.draws[static_cast<std::size_t>(best - chain.logp.begin())];
  const auto m = sample_moments(kept);
  s.mean = m.mean;
  s.sd = m.sd;
  const std::size_t d = kept.front().size();
  const double lo = 0.5 * (1.0 - level), hi = 1.0 - lo;
  std::vector<double> col(kept.size());
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t i = 0; i < kept.size(); ++i) col[i] = kept[i][l];
    std::sort(col.begin(), col.end());
    s.lower.push_back(quantile_type7(col, lo));
    s.upper.push_back(quantile_type7(col, hi));
  }
  return s;
}

}  // namespace stictaf
