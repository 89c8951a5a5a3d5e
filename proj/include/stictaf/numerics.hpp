#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stictaf {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrtPi = 1.77245385090551602730;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kLn2 = 0.69314718055994530942;

// Complementary error function. Total on finite inputs.
double erfc(double x);

// Scaled complementary error function exp(x^2) * erfc(x).
double erfcx(double x);

// log erfc(x), accurate far into the right tail where erfc underflows.
double log_erfc(double x);

// Inverse of erfc on (0, 2).
double erfcinv(double p);

// Solves log erfc(x) = log_p for x. Valid for log_p < log 2; this is
// how the tail transforms invert without forming tiny probabilities.
double erfcinv_log(double log_p);

double softplus(double x);
double sigmoid(double x);
// Inverse of softplus for y > 0.
double softplus_inv(double y);
double log_sum_exp(std::span<const double> xs);

double student_t_log_density(double x, double nu);

// Splittable random stream. A stream is fully determined by (seed, stream_id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Gamma(shape, 1).
  double gamma(double shape);
  std::size_t index(std::size_t n);

  // Child stream derived from (seed, stream_id, purpose, index).
  RngStream split(std::string_view purpose, std::uint64_t index = 0) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL);

double student_t_draw(double nu, RngStream& rng);

struct OrderedMagnitudes {
  std::vector<double> values;
  std::vector<std::size_t> source_indices;
};

// The j + 1 largest |x| in descending order; ties go to the lower index.
OrderedMagnitudes top_magnitudes(std::span<const double> xs, std::size_t j);

// Empirical quantile with linear interpolation between order statistics
// (type 7). `sorted` must be ascending.
double quantile_type7(std::span<const double> sorted, double p);

}  // namespace stictaf
