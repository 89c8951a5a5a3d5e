#pragma once

// Uniform math vocabulary over double and ad::Var so that model code can be
// written once as a template. Always call these qualified (sc::exp) to keep
// overload resolution away from std and argument-dependent lookup.

#include <cmath>
#include <span>
#include <vector>

#include "stictaf/autodiff.hpp"
#include "stictaf/numerics.hpp"

namespace stictaf::sc {

using ad::Var;

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double log1p(double x) { return std::log1p(x); }
inline double expm1(double x) { return std::expm1(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double pow(double x, double p) { return std::pow(x, p); }
inline double abs(double x) { return std::abs(x); }
inline double softplus(double x) { return stictaf::softplus(x); }
inline double sigmoid(double x) { return stictaf::sigmoid(x); }
inline double log_sigmoid(double x) { return -stictaf::softplus(-x); }
inline double erfc(double x) { return stictaf::erfc(x); }
inline double log_erfc(double x) { return stictaf::log_erfc(x); }
inline double erfcinv_log(double x) { return stictaf::erfcinv_log(x); }
inline double log_sum_exp(std::span<const double> xs) { return stictaf::log_sum_exp(xs); }
inline double dot(std::span<const double> a, std::span<const double> b, double c = 0.0) {
  for (std::size_t i = 0; i < a.size(); ++i) c += a[i] * b[i];
  return c;
}
inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline Var exp(const Var& x) { return ad::exp(x); }
inline Var log(const Var& x) { return ad::log(x); }
inline Var log1p(const Var& x) { return ad::log1p(x); }
inline Var expm1(const Var& x) { return ad::expm1(x); }
inline Var sqrt(const Var& x) { return ad::sqrt(x); }
inline Var tanh(const Var& x) { return ad::tanh(x); }
inline Var pow(const Var& x, double p) { return ad::pow(x, p); }
inline Var pow(const Var& x, const Var& p) { return ad::pow(x, p); }
inline Var abs(const Var& x) { return ad::abs(x); }
inline Var softplus(const Var& x) { return ad::softplus(x); }
inline Var sigmoid(const Var& x) { return ad::sigmoid(x); }
inline Var log_sigmoid(const Var& x) { return ad::log_sigmoid(x); }
inline Var erfc(const Var& x) { return ad::erfc(x); }
inline Var log_erfc(const Var& x) { return ad::log_erfc(x); }
inline Var erfcinv_log(const Var& x) { return ad::erfcinv_log(x); }
inline Var log_sum_exp(std::span<const Var> xs) { return ad::log_sum_exp(xs); }
inline Var dot(std::span<const Var> a, std::span<const Var> b, const Var& c = Var(0.0)) {
  return ad::dot(a, b, c);
}
inline Var dot(std::span<const double> w, std::span<const Var> x, const Var& c = Var(0.0)) {
  return ad::dot(w, x, c);
}
inline Var sum(std::span<const Var> xs) { return ad::sum(xs); }

// Converts a double vector to T, producing constants for Var.
template <class T>
std::vector<T> lift(std::span<const double> xs) {
  return std::vector<T>(xs.begin(), xs.end());
}

template <class T>
std::vector<double> values(std::span<const T> xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = value(xs[i]);
  return out;
}

}  // namespace stictaf::sc
