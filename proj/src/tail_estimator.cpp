#include "stictaf/tail_estimator.hpp"

#include <cmath>
#include <exception>
#include <iostream>
#include <limits>

namespace stictaf {

DirectionalEstimate estimate_from_radii(const LogDensity& logp, std::span<const double> mu,
                                        std::span<const double> sigma, std::span<const double> u,
                                        std::span<const double> radii, std::size_t j) {
  const std::size_t d = mu.size();
  if (sigma.size() != d || u.size() != d) throw std::invalid_argument("estimate: dimension mismatch");
  if (j < 1 || radii.size() < j + 1) throw std::invalid_argument("estimate: need j + 1 >= 2 radii");
  std::vector<double> lp(j + 1);
  std::vector<double> point(d);
  for (std::size_t i = 0; i <= j; ++i) {
    for (std::size_t l = 0; l < d; ++l) point[l] = mu[l] + radii[i] * sigma[l] * u[l];
    lp[i] = logp(point);
    if (lp[i] == -std::numeric_limits<double>::infinity())
      throw SupportBoundaryError("estimate: probe at radius " + std::to_string(radii[i]) +
                                 " lies outside the support");
    if (!std::isfinite(lp[i]))
      throw DomainError("estimate: non-finite log-density at radius " + std::to_string(radii[i]));
  }
  DirectionalEstimate out;
  // radii are descending, so logp should be non-decreasing in the index
  for (std::size_t i = 0; i < j; ++i) {
    if (lp[i] > lp[i + 1]) out.non_monotone = true;
  }
  const double log_ref = std::log(radii[j]);
  double acc = 0.0;
  for (std::size_t i = 0; i < j; ++i) {
    const double denom = std::log(radii[i]) - log_ref;
    if (denom < 1e-12) throw DomainError("estimate: degenerate log-spacing between probe radii");
    acc += (lp[i] - lp[j]) / denom;
  }
  out.xi_raw = -acc / static_cast<double>(j) - 1.0;
  return out;
}

DirectionalEstimate estimate_directional(const LogDensity& logp, std::span<const double> mu,
                                         std::span<const double> sigma, std::span<const double> u,
                                         std::size_t n, std::size_t j, double nu, RngStream& rng) {
  if (j < 1 || n < j + 1) throw std::invalid_argument("estimate: need n >= j + 1 >= 2");
  double norm = 0.0;
  for (double v : u) norm += v * v;
  if (std::abs(norm - 1.0) > 1e-9) throw std::invalid_argument("estimate: direction must be a unit vector");
  for (double s : sigma) {
    if (!(s > 0.0)) throw std::invalid_argument("estimate: sigma must be positive");
  }
  std::vector<double> draws(n);
  for (auto& x : draws) x = student_t_draw(nu, rng);
  const auto top = top_magnitudes(draws, j);
  return estimate_from_radii(logp, mu, sigma, u, top.values, j);
}

TailEntry clamp_estimate(int component, int coordinate, int sign, double xi_raw, bool non_monotone) {
  TailEntry e;
  e.component = component;
  e.coordinate = coordinate;
  e.sign = sign;
  e.xi_raw = xi_raw;
  e.non_monotone = non_monotone;
  if (non_monotone || xi_raw > kXiCap) {
    e.xi = std::nullopt;
    e.clamped = true;
  } else if (xi_raw < kXiMin) {
    e.xi = kXiMin;  // negative estimates are truncated at 0 first, then floored
    e.clamped = true;
  } else {
    e.xi = xi_raw;
  }
  return e;
}

const TailEntry* TailIndexTable::find(int component, int coordinate, int sign) const {
  for (const auto& e : entries) {
    if (e.component == component && e.coordinate == coordinate && e.sign == sign) return &e;
  }
  return nullptr;
}

std::vector<int> TailIndexTable::components() const {
  std::vector<int> out;
  for (const auto& e : entries) {
    if (out.empty() || out.back() != e.component) out.push_back(e.component);
  }
  return out;
}

TtfParams TailIndexTable::ttf_params(const ComponentAnchor& anchor) const {
  TtfParams p = TtfParams::identity(d);
  p.mu = anchor.mu;
  p.sigma = anchor.sigma;
  for (int l = 0; l < d; ++l) {
    if (const auto* e = find(anchor.component, l, +1)) p.xi_pos[l] = e->xi;
    if (const auto* e = find(anchor.component, l, -1)) p.xi_neg[l] = e->xi;
  }
  return p;
}

namespace {

TailEntry probe_one(const LogDensity& logp, const ComponentAnchor& a, int l, int sign,
                    const TailSettings& s, RngStream rng) {
  const int d = static_cast<int>(a.mu.size());
  std::vector<double> u(d, 0.0);
  u[l] = sign;
  try {
    const auto est = estimate_directional(logp, a.mu, a.sigma, u, s.n, s.j, s.nu, rng);
    auto entry = clamp_estimate(a.component, l, sign, est.xi_raw, est.non_monotone);
    if (est.non_monotone) {
      std::cerr << "warning: log-density not monotone along component " << a.component << " coordinate "
                << l << (sign > 0 ? " (+)" : " (-)") << "; using the light-tail identity\n";
    }
    return entry;
  } catch (const SupportBoundaryError&) {
    TailEntry e;
    e.component = a.component;
    e.coordinate = l;
    e.sign = sign;
    e.xi_raw = std::numeric_limits<double>::quiet_NaN();
    e.xi = std::nullopt;
    e.clamped = true;
    e.boundary = true;
    return e;
  } catch (const std::exception& ex) {
    throw TailEstimationError(std::string("tail estimate failed for component ") + std::to_string(a.component) +
                                  ", coordinate " + std::to_string(l) + ", sign " + (sign > 0 ? "+" : "-") +
                                  ": " + ex.what(),
                              a.component, l, sign);
  }
}

}  // namespace

TailIndexTable build_table(const LogDensity& logp, std::span<const ComponentAnchor> anchors,
                           const TailSettings& settings, double weight_threshold, const RngStream& rng,
                           bool parallel) {
  TailIndexTable table;
  table.n_used = settings.n;
  table.j_used = settings.j;
  table.proposal_nu = settings.nu;
  std::vector<const ComponentAnchor*> probed;
  for (const auto& a : anchors) {
    if (a.weight > weight_threshold) probed.push_back(&a);
  }
  if (anchors.empty()) return table;
  table.d = static_cast<int>(anchors.front().mu.size());
  const int d = table.d;
  const int per = 2 * d;
  const int total = static_cast<int>(probed.size()) * per;
  table.entries.resize(total);
  std::vector<std::exception_ptr> errors(total);

  auto run = [&](int t) {
    const auto& a = *probed[t / per];
    const int l = (t % per) / 2;
    const int sign = (t % 2 == 0) ? +1 : -1;
    try {
      auto stream = rng.split("tail", static_cast<std::uint64_t>(a.component * per + 2 * l + (sign > 0 ? 0 : 1)));
      table.entries[t] = probe_one(logp, a, l, sign, settings, stream);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < total; ++t) run(t);
  } else {
    for (int t = 0; t < total; ++t) run(t);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

}  // namespace stictaf
