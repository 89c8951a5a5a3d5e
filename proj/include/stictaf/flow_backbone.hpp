#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/numerics.hpp"
#include "stictaf/scalar.hpp"

namespace stictaf {

struct FlowError : std::runtime_error {
  FlowError(const std::string& what, int layer) : std::runtime_error(what), layer(layer) {}
  int layer;
};

struct SplineConfig {
  int bins = 3;
  double bound = 10.0;
  double min_width = 1e-3;
  double min_height = 1e-3;
  double min_derivative = 1e-3;

  int raw_size() const { return 3 * bins - 1; }
};

template <class T>
struct ScalarMap {
  T y;
  T log_deriv;
};

// Monotone rational-quadratic spline on [-B, B], identity outside. `raw`
// holds bins widths, bins heights and bins - 1 interior derivatives, all
// unconstrained; all zeros gives the identity.
template <class T>
ScalarMap<T> rqs_forward(std::span<const T> raw, const T& x, const SplineConfig& cfg);
template <class T>
ScalarMap<T> rqs_inverse(std::span<const T> raw, const T& y, const SplineConfig& cfg);

struct FlowConfig {
  int d = 2;
  int blocks = 2;
  int hidden = 64;
  SplineConfig spline;
};

template <class T>
struct FlowResult {
  std::vector<T> x;
  T log_det;
};

// Shared invertible backbone: `blocks` pairs of (autoregressive RQ spline,
// LU-linear mixing). Parameters live in one flat vector so that the same
// evaluation code runs on doubles or on autodiff variables.
class FlowStack {
 public:
  FlowStack() = default;
  // Identity map; first-layer conditioner weights are drawn from `rng`.
  static FlowStack identity(const FlowConfig& cfg, RngStream& rng);

  const FlowConfig& config() const { return cfg_; }
  int dim() const { return cfg_.d; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }

  template <class T>
  FlowResult<T> forward(std::span<const T> psi, std::span<const T> z) const;
  template <class T>
  FlowResult<T> inverse(std::span<const T> psi, std::span<const T> x) const;

  FlowResult<double> forward(std::span<const double> z) const { return forward<double>(params_, z); }
  FlowResult<double> inverse(std::span<const double> x) const { return inverse<double>(params_, x); }

  struct Segment {
    std::string path;
    std::size_t offset;
    std::size_t size;
  };
  // Named contiguous parameter ranges, used for serialization.
  std::vector<Segment> segments() const;

  // Sets the diagonal of block b's upper factor (for tests and tooling).
  void set_lu_upper_diag(int block, std::span<const double> diag);

  std::size_t cond_offset(int block, int coord) const;
  std::size_t lu_offset(int block) const { return lu_offset_.at(block); }

 private:
  void build_layout();

  FlowConfig cfg_;
  std::vector<double> params_;
  std::vector<std::vector<std::size_t>> cond_offset_;
  std::vector<std::size_t> lu_offset_;
};

inline constexpr double kLuDiagFloor = 1e-3;

}  // namespace stictaf
