#pragma once

#include <array>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stictaf/numerics.hpp"
#include "stictaf/targets.hpp"

namespace stictaf {

inline constexpr int kStations = 4;
inline constexpr int kSeasons = 4;
inline constexpr int kWindDim = 5 * 4;

// Unconstrained wind-model parameters. Flat order: gamma_sigma, eps_sigma,
// gamma_eta, eps_eta, a_star (four entries each).
struct WindParams {
  std::array<double, kStations> gamma_sigma{};
  std::array<double, kSeasons> eps_sigma{};
  std::array<double, kStations> gamma_eta{};
  std::array<double, kSeasons> eps_eta{};
  std::array<double, kStations> a_star{};

  double sigma(int j, int s) const;
  double eta(int j, int s) const;
  double alpha(int j) const;

  std::vector<double> flatten() const;
  static WindParams unflatten(std::span<const double> theta);
  static std::vector<std::string> names();
};

struct WindCell {
  int station = 0;  // 0-based
  int season = 0;   // 0-based
  double threshold = 0.0;
  double rate = 0.0;  // empirical exceedance frequency
  std::vector<double> x;
};

// Cells are stored station-major: index = station * kSeasons + season.
struct WindDataset {
  std::vector<WindCell> cells;

  const WindCell& cell(int j, int s) const { return cells.at(static_cast<std::size_t>(j * kSeasons + s)); }
  // Recomputes every cell's exceedance rate from its series and threshold.
  void refresh_rates();
  void validate() const;
};

struct WindDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// GPD pieces for residual y >= 0.
double gpd_cdf(double y, double sigma, double eta);
double gpd_log_pdf(double y, double sigma, double eta);

// Composite log-likelihood of one cell as a function of (sigma, eta, a_star)
// with alpha = sigmoid(a_star). -inf when a pair contribution is not positive.
double wind_cell_log_lik(const WindCell& cell, double sigma, double eta, double a_star);
// Same value together with its partial derivatives.
double wind_cell_log_lik_grad(const WindCell& cell, double sigma, double eta, double a_star,
                              std::array<double, 3>& grad);

// Log joint pair density of the four regions; y = x - u, negative means "not
// exceeded". Exposed for the probability checks.
double wind_pair_log_density(double y1, double y2, double sigma, double eta, double alpha, double rate);

// Log posterior up to a constant: composite likelihood plus t10 priors on the
// scale effects, t3 priors on the shape effects, flat Beta(1,1) on alpha and
// the sigmoid change-of-variables term.
template <class T>
T wind_log_posterior(std::span<const T> theta, const WindDataset& data);

class WindTarget : public DifferentiableTarget<WindTarget> {
 public:
  explicit WindTarget(WindDataset data);
  std::string name() const override { return "wind"; }
  int dim() const override { return kWindDim; }
  const WindDataset& data() const { return data_; }

  template <class T>
  T eval(std::span<const T> theta) const {
    return wind_log_posterior<T>(theta, data_);
  }

 private:
  WindDataset data_;
};

struct WindSimulation {
  double rate = 0.1;  // target exceedance probability per day
  // Threshold for cell (j, s) is base_threshold + threshold_step * (j + s).
  double base_threshold = 10.0;
  double threshold_step = 0.5;

  double threshold(int station, int season) const { return base_threshold + threshold_step * (station + season); }
};

// Fixed parameter set used by the simulate-wind command when none is given.
WindParams reference_wind_params();

// Draws every cell as a stationary Markov chain whose consecutive pairs follow
// the logistic model with GPD margins. Non-exceedances are filled uniformly in
// (0.4 u, u).
WindDataset simulate_wind(const WindParams& params, std::size_t days_per_cell, const RngStream& rng,
                          const WindSimulation& setup = {});

struct ThresholdRule {
  enum class Kind { absolute, quantile };
  Kind kind = Kind::quantile;
  double value = 0.9;
};

struct ThresholdConfig {
  ThresholdRule fallback;
  std::map<std::pair<int, int>, ThresholdRule> per_cell;  // keyed by 0-based (station, season)
  const ThresholdRule& rule(int j, int s) const;
};

// Inverse-ECDF quantile: the ceil(n p)-th order statistic.
double quantile_type1(std::vector<double> xs, double p);

// Series per 0-based (station, season), ordered by day, from a CSV with
// header station,season,day,speed (stations and seasons numbered 1..4).
std::map<std::pair<int, int>, std::vector<double>> read_wind_rows(const std::string& path);

// read_wind_rows plus per-cell thresholds, rates and validation.
WindDataset ingest_wind_csv(const std::string& path, const ThresholdConfig& thresholds);
void write_wind_csv(const std::string& path, const WindDataset& data);

}  // namespace stictaf
