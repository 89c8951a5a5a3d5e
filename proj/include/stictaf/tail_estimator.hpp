#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/numerics.hpp"
#include "stictaf/tail_transform.hpp"

namespace stictaf {

using LogDensity = std::function<double(std::span<const double>)>;

struct TailSettings {
  std::size_t n = 200000;
  std::size_t j = 30;
  double nu = 2.0;
};

// A probed point left the target's support (log-density -inf).
struct SupportBoundaryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TailEstimationError : std::runtime_error {
  TailEstimationError(const std::string& what, int component, int coordinate, int sign)
      : std::runtime_error(what), component(component), coordinate(coordinate), sign(sign) {}
  int component, coordinate, sign;
};

struct DirectionalEstimate {
  double xi_raw = 0.0;
  // logp increased with radius somewhere among the j + 1 probes
  bool non_monotone = false;
};

// Directional tail-index estimate of logp around (mu, sigma) along unit
// vector u, probing at mu + r_(i) * (sigma * u) for the j + 1 largest
// magnitudes r_(i) of n scalar Student-t(nu) draws.
DirectionalEstimate estimate_directional(const LogDensity& logp, std::span<const double> mu,
                                         std::span<const double> sigma, std::span<const double> u,
                                         std::size_t n, std::size_t j, double nu, RngStream& rng);

// Same estimator on precomputed descending radii (at least j + 1).
DirectionalEstimate estimate_from_radii(const LogDensity& logp, std::span<const double> mu,
                                        std::span<const double> sigma, std::span<const double> u,
                                        std::span<const double> radii, std::size_t j);

struct TailEntry {
  int component = 0;
  int coordinate = 0;
  int sign = +1;
  double xi_raw = 0.0;
  TailIndex xi;          // clamped value used by the transform
  bool clamped = false;  // xi differs from xi_raw (cap, floor, boundary, monotonicity)
  bool boundary = false;
  bool non_monotone = false;
};

struct ComponentAnchor {
  int component = 0;
  double weight = 0.0;
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct TailIndexTable {
  std::size_t n_used = 0;
  std::size_t j_used = 0;
  double proposal_nu = 0.0;
  int d = 0;
  std::vector<TailEntry> entries;

  const TailEntry* find(int component, int coordinate, int sign) const;
  std::vector<int> components() const;
  // Transform parameters for one probed component using its anchor.
  TtfParams ttf_params(const ComponentAnchor& anchor) const;
};

// Clamping policy applied to a raw estimate.
TailEntry clamp_estimate(int component, int coordinate, int sign, double xi_raw, bool non_monotone);

// Probes every (component, coordinate, sign) for anchors whose weight exceeds
// `weight_threshold`. Each triple uses its own stream split from `rng`, so
// the result does not depend on scheduling. `parallel` selects the OpenMP
// kernel; the serial loop is the reference.
TailIndexTable build_table(const LogDensity& logp, std::span<const ComponentAnchor> anchors,
                           const TailSettings& settings, double weight_threshold, const RngStream& rng,
                           bool parallel = true);

}  // namespace stictaf
