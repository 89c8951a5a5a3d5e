#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/numerics.hpp"
#include "stictaf/scalar.hpp"

namespace stictaf {

inline constexpr double kXiCap = 30.0;
inline constexpr double kXiMin = 0.1;

// Tail index of one coordinate direction; std::nullopt is the LIGHT sentinel
// (identity map on that half-line).
using TailIndex = std::optional<double>;

struct SaturationError : std::runtime_error {
  SaturationError(const std::string& what, int coordinate)
      : std::runtime_error(what), coordinate(coordinate) {}
  int coordinate;
};

struct TtfParams {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<TailIndex> xi_pos;
  std::vector<TailIndex> xi_neg;

  static TtfParams identity(int d);
  int dim() const { return static_cast<int>(mu.size()); }
  bool is_identity() const;
  void validate() const;
};

template <class T>
struct TtfResult {
  std::vector<T> x;
  T log_det;
};

// Per coordinate, with r = (z - mu) / sigma, s = sign(r) and tail index xi on
// side s, the map is
//   x = mu + sigma * s * xi * (erfc(|r| / sqrt 2)^(-1/xi) - 1),
// whose pushforward of a Gaussian has survival ~ t^(-xi) on that side.
template <class T>
TtfResult<T> ttf_forward(const TtfParams& p, std::span<const T> z);
template <class T>
TtfResult<T> ttf_inverse(const TtfParams& p, std::span<const T> x);

// Scalar forms on a single coordinate, mostly for tests and tooling.
template <class T>
T ttf_scalar_forward(const T& z, double mu, double sigma, const TailIndex& pos, const TailIndex& neg,
                     T* log_deriv = nullptr, int coordinate = 0);
template <class T>
T ttf_scalar_inverse(const T& x, double mu, double sigma, const TailIndex& pos, const TailIndex& neg,
                     T* log_deriv = nullptr, int coordinate = 0);

// Hill-type log-survival slope of the pushforward of N(mu, sigma^2) along
// +e_coordinate (sign > 0) or -e_coordinate (sign < 0), fitted on the top
// `top_fraction` of n draws.
double tail_index_of_pushforward(const TtfParams& p, int coordinate, int sign, std::size_t n,
                                 RngStream& rng, double top_fraction = 1e-4);

}  // namespace stictaf
