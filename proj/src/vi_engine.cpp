#include "stictaf/vi_engine.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "stictaf/scalar.hpp"

namespace stictaf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Typed view of the packed parameter vector.
template <class T>
struct View {
  int K, d;
  std::span<const T> theta;

  std::span<const T> mu(int k) const { return theta.subspan(static_cast<std::size_t>(k * d), d); }
  std::span<const T> log_sigma(int k) const { return theta.subspan(static_cast<std::size_t>(K * d + k * d), d); }
  std::span<const T> raw_alpha() const { return theta.subspan(static_cast<std::size_t>(2 * K * d), K - 1); }
  std::span<const T> raw_beta() const {
    return theta.subspan(static_cast<std::size_t>(2 * K * d + K - 1), K - 1);
  }
  std::span<const T> psi() const { return theta.subspan(static_cast<std::size_t>(2 * K * d + 2 * (K - 1))); }
};

template <class T>
T target_term(const TargetDensity& target, std::span<const T> y, int k, int s) {
  const std::vector<double> yv = sc::values<T>(y);
  double v;
  std::vector<double> g;
  if constexpr (std::is_same_v<T, ad::Var>) {
    v = target.log_density_grad(yv, g);
  } else {
    v = target.log_density(yv);
  }
  if (!std::isfinite(v))
    throw ElboError("weighted_elbo: non-finite target log-density for component " + std::to_string(k) + ", sample " +
                        std::to_string(s),
                    k, s);
  if constexpr (std::is_same_v<T, ad::Var>) {
    return ad::custom(v, y, g);
  } else {
    return v;
  }
}

// Base-space density of component k: z = mu_k + sigma_k * TTF_k(e) with
// e ~ N(0, I), so the standardized point is pulled back through TTF_k.
template <class T>
T component_log_q(std::span<const T> mu, std::span<const T> log_sigma, const TtfParams& t, std::span<const T> z) {
  T acc = T(0.0);
  for (std::size_t l = 0; l < z.size(); ++l) {
    const T u = (z[l] - mu[l]) * sc::exp(-log_sigma[l]);
    T ld = T(0.0);
    const T e = ttf_scalar_inverse<T>(u, t.mu[l], t.sigma[l], t.xi_pos[l], t.xi_neg[l], &ld, static_cast<int>(l));
    acc = acc + ld - 0.5 * e * e - log_sigma[l];
  }
  return acc - kLogSqrt2Pi * static_cast<double>(z.size());
}

// Standard-normal noise through TTF_k; adds log|dTTF/de| to `log_det`.
std::vector<double> tail_noise(const TtfParams& t, std::span<const double> eps, double* log_det = nullptr) {
  std::vector<double> out(eps.size());
  for (std::size_t l = 0; l < eps.size(); ++l) {
    double ld = 0.0;
    out[l] = ttf_scalar_forward<double>(eps[l], t.mu[l], t.sigma[l], t.xi_pos[l], t.xi_neg[l], &ld,
                                        static_cast<int>(l));
    if (log_det) *log_det += ld;
  }
  return out;
}

// log q(y) for y = T(z0), z0 a draw of component k. The backbone is shared,
// so every component is evaluated at the same base point z0; `own` is the
// already known log q_k(z0).
template <class T>
T mixture_log_q(const StictafModel& model, const View<T>& p, std::span<const T> log_w,
                std::span<const double> weights, double prune, int k, std::span<const T> z0, const T& own,
                const T& fwd_log_det) {
  std::vector<T> terms;
  terms.reserve(p.K);
  for (int j = 0; j < p.K; ++j) {
    if (j == k) {
      terms.push_back(log_w[k] + own);
      continue;
    }
    if (weights[j] < prune) continue;
    try {
      terms.push_back(log_w[j] + component_log_q<T>(p.mu(j), p.log_sigma(j), model.ttf[j], z0));
    } catch (const std::exception&) {
      // component j has no density at z0
    }
  }
  return sc::log_sum_exp(std::span<const T>(terms)) - fwd_log_det;
}

template <class T>
T component_term(const StictafModel& model, const TargetDensity& target, const View<T>& p,
                 std::span<const double> weights, double prune, int k, const std::vector<std::vector<double>>& eps) {
  const int d = p.d;
  const auto log_w = expected_log_weights<T>(p.raw_alpha(), p.raw_beta());
  const auto mu = p.mu(k);
  const auto ls = p.log_sigma(k);
  std::vector<T> scale(d);
  T sum_ls = T(0.0);
  for (int l = 0; l < d; ++l) {
    scale[l] = sc::exp(ls[l]);
    sum_ls = sum_ls + ls[l];
  }
  T acc = T(0.0);
  const int S = static_cast<int>(eps.size());
  for (int s = 0; s < S; ++s) {
    try {
      double noise_ld = 0.0, sq = 0.0;
      const auto e = tail_noise(model.ttf[k], eps[s], &noise_ld);
      for (double v : eps[s]) sq += v * v;
      std::vector<T> z0(d);
      for (int l = 0; l < d; ++l) z0[l] = mu[l] + scale[l] * e[l];
      const T own = (-0.5 * sq - noise_ld - kLogSqrt2Pi * static_cast<double>(d)) - sum_ls;
      auto fwd = model.backbone.forward<T>(p.psi(), std::span<const T>(z0));
      const T lp = target_term<T>(target, std::span<const T>(fwd.x), k, s);
      const T lq = mixture_log_q<T>(model, p, log_w, weights, prune, k, z0, own, fwd.log_det);
      acc = acc + (lp - lq);
    } catch (const ElboError&) {
      throw;
    } catch (const std::exception& e) {
      throw ElboError(std::string("weighted_elbo: component ") + std::to_string(k) + ", sample " +
                          std::to_string(s) + ": " + e.what(),
                      k, s);
    }
  }
  if (!std::isfinite(sc::value(acc)))
    throw ElboError("weighted_elbo: non-finite objective for component " + std::to_string(k), k, -1);
  return sc::exp(log_w[k]) * (acc / static_cast<double>(S));
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::base_learning: return "base_learning";
    case Stage::tail_frozen: return "tail_frozen";
    case Stage::refinement: return "refinement";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::base_learning, Stage::tail_frozen, Stage::refinement})
    if (name == stage_name(s)) return s;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

StictafModel StictafModel::initialize(int K, const FlowConfig& flow, RngStream& rng) {
  StictafModel m;
  m.base = StickBreakingBase::uniform(K, flow.d);
  m.backbone = FlowStack::identity(flow, rng);
  m.ttf.assign(K, TtfParams::identity(flow.d));
  return m;
}

std::size_t StictafModel::backbone_offset() const {
  return static_cast<std::size_t>(2 * base.K * base.d + 2 * (base.K - 1));
}

std::size_t StictafModel::num_params() const { return backbone_offset() + backbone.num_params(); }

std::vector<double> StictafModel::pack() const {
  std::vector<double> out;
  out.reserve(num_params());
  for (const auto& m : base.mu) out.insert(out.end(), m.begin(), m.end());
  for (const auto& s : base.log_sigma) out.insert(out.end(), s.begin(), s.end());
  out.insert(out.end(), base.raw_alpha.begin(), base.raw_alpha.end());
  out.insert(out.end(), base.raw_beta.begin(), base.raw_beta.end());
  out.insert(out.end(), backbone.params().begin(), backbone.params().end());
  return out;
}

void StictafModel::unpack(std::span<const double> theta) {
  if (theta.size() != num_params()) throw std::invalid_argument("StictafModel::unpack: size mismatch");
  const int K = base.K, d = base.d;
  std::size_t i = 0;
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < d; ++l) base.mu[k][l] = theta[i++];
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < d; ++l) base.log_sigma[k][l] = theta[i++];
  for (auto& a : base.raw_alpha) a = theta[i++];
  for (auto& b : base.raw_beta) b = theta[i++];
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(i), theta.end(), backbone.params().begin());
}

void StictafModel::validate() const {
  base.validate();
  if (backbone.dim() != base.d) throw std::invalid_argument("StictafModel: backbone dimension mismatch");
  if (static_cast<int>(ttf.size()) != base.K) throw std::invalid_argument("StictafModel: one TTF per component");
  for (const auto& t : ttf) {
    if (t.dim() != base.d) throw std::invalid_argument("StictafModel: TTF dimension mismatch");
    t.validate();
  }
  if (stage == Stage::base_learning) {
    for (const auto& t : ttf)
      if (!t.is_identity()) throw std::invalid_argument("StictafModel: tail transforms must be identity in stage 1");
  }
}

double model_log_density(const StictafModel& model, std::span<const double> x) {
  const int K = model.K();
  const auto theta = model.pack();
  const View<double> p{K, model.dim(), theta};
  const auto log_w = expected_log_weights<double>(p.raw_alpha(), p.raw_beta());
  FlowResult<double> inv;
  try {
    inv = model.backbone.inverse(x);
  } catch (const std::exception&) {
    return kNegInf;
  }
  std::vector<double> terms;
  for (int k = 0; k < K; ++k) {
    try {
      terms.push_back(log_w[k] + component_log_q<double>(p.mu(k), p.log_sigma(k), model.ttf[k], inv.x));
    } catch (const std::exception&) {
      // no density under this component
    }
  }
  if (terms.empty()) return kNegInf;
  return log_sum_exp(terms) + inv.log_det;
}

LabelledSamples sample(const StictafModel& model, std::size_t n, const RngStream& rng, bool parallel) {
  const int d = model.dim();
  const auto w = expected_weights(model.base);
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  RngStream stream = rng.split("sample");
  LabelledSamples out;
  out.x.assign(n, std::vector<double>(d));
  out.component.assign(n, 0);
  std::vector<std::vector<double>> eps(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = stream.uniform() * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    out.component[i] = static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(), model.K() - 1));
    for (auto& e : eps[i]) e = stream.normal();
  }
  std::vector<std::exception_ptr> errors(n);
  auto push = [&](std::size_t i) {
    try {
      const int k = out.component[i];
      std::vector<double> z0(d);
      const auto e = tail_noise(model.ttf[k], eps[i]);
      for (int l = 0; l < d; ++l) z0[l] = model.base.mu[k][l] + std::exp(model.base.log_sigma[k][l]) * e[l];
      out.x[i] = model.backbone.forward(z0).x;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto total = static_cast<std::ptrdiff_t>(n);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < total; ++i) push(static_cast<std::size_t>(i));
  } else {
    for (std::ptrdiff_t i = 0; i < total; ++i) push(static_cast<std::size_t>(i));
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

ElboResult weighted_elbo(const StictafModel& model, const TargetDensity& target, const ElboOptions& opt,
                         const RngStream& rng) {
  if (opt.samples_per_component < 1) throw std::invalid_argument("weighted_elbo: need at least one sample");
  if (target.dim() != model.dim()) throw std::invalid_argument("weighted_elbo: target dimension mismatch");
  const int K = model.K(), d = model.dim();
  const auto theta = model.pack();
  const std::size_t P = theta.size();
  const auto weights = expected_weights(model.base);

  ElboResult res;
  res.per_component.assign(K, 0.0);
  std::vector<std::vector<double>> grads(opt.with_gradient ? K : 0);
  std::vector<std::exception_ptr> errors(K);

  auto run = [&](int k) {
    try {
      RngStream stream = rng.split("elbo", static_cast<std::uint64_t>(k));
      std::vector<std::vector<double>> eps(opt.samples_per_component, std::vector<double>(d));
      for (auto& e : eps)
        for (auto& v : e) v = stream.normal();
      if (!opt.with_gradient) {
        const View<double> p{K, d, theta};
        res.per_component[k] = component_term<double>(model, target, p, weights, opt.prune_weight, k, eps);
        return;
      }
      ad::Tape tape;
      ad::ScopedTape scope(tape);
      std::vector<ad::Var> leaves;
      leaves.reserve(P);
      for (double v : theta) leaves.push_back(tape.leaf(v));
      const View<ad::Var> p{K, d, leaves};
      const ad::Var c = component_term<ad::Var>(model, target, p, weights, opt.prune_weight, k, eps);
      res.per_component[k] = c.v;
      tape.seed(c);
      tape.propagate(tape.size());
      auto& g = grads[k];
      g.resize(P);
      for (std::size_t i = 0; i < P; ++i) g[i] = tape.adjoint(leaves[i]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (opt.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < K; ++k) run(k);
  } else {
    for (int k = 0; k < K; ++k) run(k);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (int k = 0; k < K; ++k) res.value += res.per_component[k];
  if (opt.with_gradient) {
    res.gradient.assign(P, 0.0);
    for (int k = 0; k < K; ++k)
      for (std::size_t i = 0; i < P; ++i) res.gradient[i] += grads[k][i];
  }
  return res;
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& theta, std::span<const double> grad, std::span<const bool> mask) {
  if (grad.size() != theta.size() || theta.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    theta[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Adam::reset() {
  t_ = 0;
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
}

void TrainConfig::validate() const {
  if (K < 1) throw std::invalid_argument("TrainConfig: K must be positive");
  if (iters_stage1 < 1 || iters_stage3 < 1) throw std::invalid_argument("TrainConfig: iteration counts must be positive");
  if (samples_per_component < 1) throw std::invalid_argument("TrainConfig: mc_samples_per_component must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: moment decays must lie in [0, 1)");
  if (tails.n < tails.j + 1 || tails.j < 1 || !(tails.nu > 0.0))
    throw std::invalid_argument("TrainConfig: invalid tail settings");
  if (!(weight_threshold >= 0.0 && weight_threshold < 1.0))
    throw std::invalid_argument("TrainConfig: weight_threshold must be in [0, 1)");
  if (anchor_samples < 2 || log_interval < 1) throw std::invalid_argument("TrainConfig: invalid counts");
}

std::vector<ComponentAnchor> component_anchors(const StictafModel& model, std::size_t n, double threshold,
                                               const RngStream& rng) {
  const auto w = expected_weights(model.base);
  const int d = model.dim();
  std::vector<ComponentAnchor> out;
  for (int k = 0; k < model.K(); ++k) {
    if (!(w[k] > threshold)) continue;
    RngStream stream = rng.split("anchor", static_cast<std::uint64_t>(k));
    const auto draws = component_sample(model.base, k, n, stream);
    std::vector<double> mean(d, 0.0), m2(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = model.backbone.forward(draws.z[i]).x;
      // Welford update
      for (int l = 0; l < d; ++l) {
        const double delta = x[l] - mean[l];
        mean[l] += delta / static_cast<double>(i + 1);
        m2[l] += delta * (x[l] - mean[l]);
      }
    }
    ComponentAnchor a;
    a.component = k;
    a.weight = w[k];
    a.mu = mean;
    a.sigma.resize(d);
    for (int l = 0; l < d; ++l) a.sigma[l] = std::max(std::sqrt(m2[l] / static_cast<double>(n - 1)), 1e-12);
    out.push_back(std::move(a));
  }
  return out;
}

void attach_tails(StictafModel& model, const LogDensity& logp, const TrainConfig& cfg, const RngStream& rng) {
  model.anchors = component_anchors(model, cfg.anchor_samples, cfg.weight_threshold, rng.split("anchors"));
  auto table = build_table(logp, model.anchors, cfg.tails, cfg.weight_threshold, rng.split("tail-table"), cfg.parallel);
  table.d = model.dim();
  model.ttf.assign(model.K(), TtfParams::identity(model.dim()));
  for (const auto& a : model.anchors) {
    // the transform acts on the standardized base noise of its component
    auto t = table.ttf_params(a);
    t.mu.assign(model.dim(), 0.0);
    t.sigma.assign(model.dim(), 1.0);
    model.ttf[a.component] = std::move(t);
  }
  model.tails = std::move(table);
  model.stage = Stage::tail_frozen;
}

namespace {

void check_simplex(const StictafModel& model) {
  const auto w = expected_weights(model.base);
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw std::logic_error("expected weights left the simplex");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-10) throw std::logic_error("expected weights do not sum to one");
}

struct StageRunner {
  const TargetDensity& target;
  const TrainConfig& cfg;
  const RngStream& root;
  const TrainObserver& observer;
  std::chrono::steady_clock::time_point start;
  std::vector<TraceRow>& trace;
  std::size_t global_iter = 0;
  std::optional<Adam> adam_state;  // moments carry over from one stage to the next

  void run(StictafModel& model, int stage, std::size_t iters, bool train_backbone) {
    std::vector<double> theta = model.pack();
    std::vector<bool> mask_store(theta.size(), true);
    if (!train_backbone)
      std::fill(mask_store.begin() + static_cast<std::ptrdiff_t>(model.backbone_offset()), mask_store.end(), false);
    std::unique_ptr<bool[]> mask(new bool[theta.size()]);
    for (std::size_t i = 0; i < theta.size(); ++i) mask[i] = mask_store[i];
    const std::span<const bool> mask_span(mask.get(), theta.size());

    if (!adam_state) adam_state.emplace(theta.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    Adam& adam = *adam_state;
    adam.set_learning_rate(cfg.learning_rate);
    ElboOptions opt;
    opt.samples_per_component = cfg.samples_per_component;
    opt.prune_weight = cfg.prune_weight;
    opt.parallel = cfg.parallel;

    std::vector<double> prev_theta, prev_grad;
    Adam prev_adam = adam;
    double prev_elbo = std::numeric_limits<double>::quiet_NaN();

    auto evaluate = [&](const RngStream& stream) {
      try {
        return weighted_elbo(model, target, opt, stream);
      } catch (const ElboError& e) {
        ElboResult bad;
        bad.value = std::numeric_limits<double>::quiet_NaN();
        if (prev_theta.empty()) {
          throw TrainAborted(std::string("stage ") + std::to_string(stage) + ": " + e.what(), model, trace);
        }
        return bad;
      }
    };

    for (std::size_t it = 0; it < iters; ++it, ++global_iter) {
      const RngStream stream = root.split("elbo-iter", global_iter);
      ElboResult r = evaluate(stream);
      if (!prev_theta.empty() && !(r.value >= prev_elbo - cfg.divergence_nats)) {
        // undo the previous step and retry it once at half the step size
        theta = prev_theta;
        adam = prev_adam;
        adam.set_learning_rate(0.5 * adam.learning_rate());
        adam.step(theta, prev_grad, mask_span);
        model.unpack(theta);
        r = evaluate(stream);
        if (!(r.value >= prev_elbo - cfg.divergence_nats)) {
          model.unpack(prev_theta);
          throw TrainAborted("stage " + std::to_string(stage) + " diverged at iteration " +
                                 std::to_string(global_iter) + " (ELBO " + std::to_string(r.value) +
                                 " after " + std::to_string(prev_elbo) + ")",
                             model, trace);
        }
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      trace.push_back({global_iter, stage, r.value, secs});
      check_simplex(model);

      prev_theta = theta;
      prev_adam = adam;
      prev_grad = r.gradient;
      prev_elbo = r.value;
      adam.step(theta, r.gradient, mask_span);
      model.unpack(theta);
      if (observer && (it + 1) % cfg.log_interval == 0) observer(model, trace);
    }
    check_simplex(model);
  }
};

}  // namespace

TrainResult train(const TargetDensity& target, const TrainConfig& cfg, const TargetDensity* probe,
                  const TrainObserver& observer) {
  cfg.validate();
  FlowConfig flow = cfg.flow;
  flow.d = target.dim();
  const RngStream root(cfg.seed, 0);
  RngStream init = root.split("init");
  TrainResult out;
  out.model = StictafModel::initialize(cfg.K, flow, init);
  RngStream means = root.split("init-means");
  initialize_means(out.model.base, target.as_function(), means, cfg.init_radius);

  StageRunner runner{target, cfg, root, observer, std::chrono::steady_clock::now(), out.trace};
  out.model.stage = Stage::base_learning;
  runner.run(out.model, 1, cfg.iters_stage1, cfg.train_backbone_stage1);

  const TargetDensity& probe_target = probe ? *probe : target;
  attach_tails(out.model, probe_target.as_function(), cfg, root.split("tails"));
  if (observer) observer(out.model, out.trace);

  out.model.stage = Stage::refinement;
  runner.run(out.model, 3, cfg.iters_stage3, true);
  if (observer) observer(out.model, out.trace);
  return out;
}

}  // namespace stictaf
