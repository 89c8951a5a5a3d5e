#include "stictaf/targets.hpp"

#include <cmath>
#include <limits>

#include "stictaf/scalar.hpp"

namespace stictaf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Samples TargetDensity::sample(std::size_t, RngStream&) const {
  throw std::logic_error("target '" + name() + "' has no exact sampler");
}

LogDensity TargetDensity::as_function() const {
  return [this](std::span<const double> z) { return log_density(z); };
}

template <class T>
T student_t_log_pdf(const T& x, double nu) {
  if (std::isinf(nu)) return -0.5 * x * x - kLogSqrt2Pi;
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * kPi);
  return c - (0.5 * (nu + 1.0)) * sc::log1p(x * x / nu);
}

template double student_t_log_pdf<double>(const double&, double);
template ad::Var student_t_log_pdf<ad::Var>(const ad::Var&, double);

// ---------------------------------------------------------------------------
// Normal x inverse-gamma

template <class T>
T NigTarget::eval(std::span<const T> z) const {
  const double log_norm = kShape * std::log(kScale) - std::lgamma(kShape);
  const T beta_part = -0.5 * z[0] * z[0] - kLogSqrt2Pi;
  const double s = sc::value(z[1]);
  if (continuation_ > 0.0 && s < continuation_) {
    const double c = continuation_;
    const double g = log_norm - (kShape + 1.0) * std::log(c) - kScale / c;
    const double slope = -(kShape + 1.0) / c + kScale / (c * c);
    return beta_part + g + slope * (z[1] - c);
  }
  if (!(s > 0.0)) return T(kNegInf);
  return beta_part + log_norm - (kShape + 1.0) * sc::log(z[1]) - kScale / z[1];
}

template double NigTarget::eval<double>(std::span<const double>) const;
template ad::Var NigTarget::eval<ad::Var>(std::span<const ad::Var>) const;

Samples NigTarget::sample(std::size_t n, RngStream& rng) const {
  Samples out(n, std::vector<double>(2));
  for (auto& z : out) {
    z[0] = rng.normal();
    z[1] = kScale / rng.gamma(kShape);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Student-t / normal products

ProductTarget::ProductTarget(std::vector<double> nu, std::vector<double> shift)
    : nu_(std::move(nu)), shift_(std::move(shift)) {
  if (nu_.empty()) throw std::invalid_argument("ProductTarget: empty dimension list");
  if (shift_.empty()) shift_.assign(nu_.size(), 0.0);
  if (shift_.size() != nu_.size()) throw std::invalid_argument("ProductTarget: shift size mismatch");
  name_ = "product";
  for (double v : nu_) {
    if (!(v > 0.0)) throw std::invalid_argument("ProductTarget: degrees of freedom must be positive");
    name_ += std::isinf(v) ? "_normal" : "_t" + std::to_string(static_cast<int>(v));
  }
}

ProductTarget ProductTarget::standard_normal(int d) {
  return ProductTarget(std::vector<double>(d, std::numeric_limits<double>::infinity()));
}

template <class T>
T ProductTarget::eval(std::span<const T> z) const {
  T acc = T(0.0);
  for (std::size_t i = 0; i < nu_.size(); ++i) acc = acc + student_t_log_pdf<T>(z[i] - shift_[i], nu_[i]);
  return acc;
}

template double ProductTarget::eval<double>(std::span<const double>) const;
template ad::Var ProductTarget::eval<ad::Var>(std::span<const ad::Var>) const;

Samples ProductTarget::sample(std::size_t n, RngStream& rng) const {
  Samples out(n, std::vector<double>(nu_.size()));
  for (auto& z : out) {
    for (std::size_t i = 0; i < nu_.size(); ++i)
      z[i] = shift_[i] + (std::isinf(nu_[i]) ? rng.normal() : student_t_draw(nu_[i], rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two moons

template <class T>
T TwoMoons::log_energy(const T& dx, const T& dy) {
  const T r = sc::sqrt(dx * dx + dy * dy);
  const T ring = (r - kRadius) / kWidth;
  const T a = (dx - kLobeOffset) / kLobeWidth;
  const T b = (dx + kLobeOffset) / kLobeWidth;
  const T lobes[2] = {-0.5 * a * a, -0.5 * b * b};
  return -0.5 * ring * ring + sc::log_sum_exp(std::span<const T>(lobes, 2));
}

template double TwoMoons::log_energy<double>(const double&, const double&);
template ad::Var TwoMoons::log_energy<ad::Var>(const ad::Var&, const ad::Var&);

double TwoMoons::log_normalizer() {
  static const double value = [] {
    // Composite Simpson on the box; the energy is below 1e-12 at its edge.
    const int n = 1400;
    const double h = 2.0 * kHalfBox / n;
    auto weight = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = -kHalfBox + i * h;
      double row = 0.0;
      for (int k = 0; k <= n; ++k) row += weight(k) * std::exp(log_energy(x, -kHalfBox + k * h));
      total += weight(i) * row;
    }
    return std::log(total * h * h / 9.0);
  }();
  return value;
}

std::vector<double> TwoMoons::sample(RngStream& rng) {
  // the energy never exceeds 1 + exp(-(2 kLobeOffset / kLobeWidth)^2 / 2)
  const double bound = 1.0 + 1e-9;
  for (;;) {
    const double x = kHalfBox * (2.0 * rng.uniform() - 1.0);
    const double y = kHalfBox * (2.0 * rng.uniform() - 1.0);
    if (rng.uniform() * bound < std::exp(log_energy(x, y))) return {x, y};
  }
}

// ---------------------------------------------------------------------------
// Complex mixture

template <class T>
T ComplexMixtureTarget::component_log_density(int k, std::span<const T> z) const {
  const T dx = z[0] - kCenters[k][0];
  const T dy = z[1] - kCenters[k][1];
  switch (k) {
    case 0:
      return student_t_log_pdf<T>(dx, std::numeric_limits<double>::infinity()) + student_t_log_pdf<T>(dy, 2.0);
    case 1:
      return student_t_log_pdf<T>(dx, 3.0) + student_t_log_pdf<T>(dy, std::numeric_limits<double>::infinity());
    case 2:
      return TwoMoons::log_energy<T>(dx, dy) - TwoMoons::log_normalizer();
    case 3:
      return student_t_log_pdf<T>(dx, 2.0) + student_t_log_pdf<T>(dy, 3.0);
    default:
      throw std::out_of_range("ComplexMixtureTarget: component index");
  }
}

template <class T>
T ComplexMixtureTarget::eval(std::span<const T> z) const {
  T terms[4];
  for (int k = 0; k < 4; ++k) terms[k] = std::log(kWeights[k]) + component_log_density<T>(k, z);
  return sc::log_sum_exp(std::span<const T>(terms, 4));
}

template double ComplexMixtureTarget::component_log_density<double>(int, std::span<const double>) const;
template ad::Var ComplexMixtureTarget::component_log_density<ad::Var>(int, std::span<const ad::Var>) const;
template double ComplexMixtureTarget::eval<double>(std::span<const double>) const;
template ad::Var ComplexMixtureTarget::eval<ad::Var>(std::span<const ad::Var>) const;

Samples ComplexMixtureTarget::sample_labelled(std::size_t n, RngStream& rng, std::vector<int>& labels) const {
  Samples out(n);
  labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int k = 0;
    double acc = kWeights[0];
    while (k < 3 && u > acc) acc += kWeights[++k];
    labels[i] = k;
    std::vector<double> d;
    switch (k) {
      case 0: d = {rng.normal(), student_t_draw(2.0, rng)}; break;
      case 1: d = {student_t_draw(3.0, rng), rng.normal()}; break;
      case 2: d = TwoMoons::sample(rng); break;
      default: d = {student_t_draw(2.0, rng), student_t_draw(3.0, rng)}; break;
    }
    out[i] = {kCenters[k][0] + d[0], kCenters[k][1] + d[1]};
  }
  return out;
}

Samples ComplexMixtureTarget::sample(std::size_t n, RngStream& rng) const {
  std::vector<int> labels;
  return sample_labelled(n, rng, labels);
}

std::unique_ptr<TargetDensity> make_target(const std::string& name, int dim) {
  if (name == "nig") return std::make_unique<NigTarget>();
  if (name == "complex_mixture") return std::make_unique<ComplexMixtureTarget>();
  if (name == "std_normal") return std::make_unique<ProductTarget>(ProductTarget::standard_normal(dim));
  if (name == "t2_t3") return std::make_unique<ProductTarget>(std::vector<double>{2.0, 3.0});
  throw std::invalid_argument("unknown target '" + name + "'");
}

}  // namespace stictaf
