#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/autodiff.hpp"
#include "stictaf/numerics.hpp"
#include "stictaf/tail_estimator.hpp"

namespace stictaf {

using Samples = std::vector<std::vector<double>>;

// Log-density of a distribution to approximate, possibly unnormalized.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double log_density(std::span<const double> z) const = 0;
  // Returns log p(z) and writes d log p / dz into `grad` (resized to dim()).
  // Outside the support the value is -inf and the gradient is zero.
  virtual double log_density_grad(std::span<const double> z, std::vector<double>& grad) const = 0;
  virtual bool normalized() const { return false; }
  virtual bool has_sampler() const { return false; }
  virtual Samples sample(std::size_t n, RngStream& rng) const;

  LogDensity as_function() const;
};

// Implements the double and gradient entry points from one templated
// `eval<T>` in Derived, differentiated on a per-thread scratch tape.
template <class Derived>
class DifferentiableTarget : public TargetDensity {
 public:
  double log_density(std::span<const double> z) const override {
    return static_cast<const Derived&>(*this).template eval<double>(z);
  }

  double log_density_grad(std::span<const double> z, std::vector<double>& grad) const override {
    grad.assign(z.size(), 0.0);
    const double v = log_density(z);
    if (!std::isfinite(v)) return v;
    thread_local ad::Tape tape;
    tape.clear();
    ad::ScopedTape scope(tape);
    std::vector<ad::Var> x;
    x.reserve(z.size());
    for (double zi : z) x.push_back(tape.leaf(zi));
    const ad::Var y = static_cast<const Derived&>(*this).template eval<ad::Var>(x);
    tape.seed(y);
    tape.propagate(tape.size());
    for (std::size_t i = 0; i < z.size(); ++i) grad[i] = tape.adjoint(x[i]);
    tape.clear();
    return y.v;
  }
};

// beta ~ N(0, 1), s ~ InvGamma(shape 3, scale 1), z = (beta, s).
class NigTarget : public DifferentiableTarget<NigTarget> {
 public:
  static constexpr double kShape = 3.0;
  static constexpr double kScale = 1.0;

  // continuation > 0 replaces the s-factor below s = continuation by its
  // tangent line, keeping the log-density finite for s <= 0 (used only as a
  // training objective; the exact density is -inf there).
  explicit NigTarget(double continuation = 0.0) : continuation_(continuation) {}

  std::string name() const override { return "nig"; }
  int dim() const override { return 2; }
  bool normalized() const override { return continuation_ == 0.0; }
  bool has_sampler() const override { return true; }
  Samples sample(std::size_t n, RngStream& rng) const override;
  double continuation() const { return continuation_; }

  template <class T>
  T eval(std::span<const T> z) const;

 private:
  double continuation_;
};

// Product of independent standard Student-t coordinates (nu = inf gives a
// standard normal coordinate).
class ProductTarget : public DifferentiableTarget<ProductTarget> {
 public:
  explicit ProductTarget(std::vector<double> nu, std::vector<double> shift = {});
  static ProductTarget standard_normal(int d);

  std::string name() const override { return name_; }
  int dim() const override { return static_cast<int>(nu_.size()); }
  bool normalized() const override { return true; }
  bool has_sampler() const override { return true; }
  Samples sample(std::size_t n, RngStream& rng) const override;

  template <class T>
  T eval(std::span<const T> z) const;

 private:
  std::vector<double> nu_;
  std::vector<double> shift_;
  std::string name_;
};

// Unnormalized two-moons energy centred at c:
// exp(-((|z - c| - 2) / 0.2)^2 / 2) * [N((x - cx - 2)/0.6) + N((x - cx + 2)/0.6)].
struct TwoMoons {
  static constexpr double kRadius = 2.0;
  static constexpr double kWidth = 0.2;
  static constexpr double kLobeOffset = 2.0;
  static constexpr double kLobeWidth = 0.6;
  static constexpr double kHalfBox = 3.5;

  template <class T>
  static T log_energy(const T& dx, const T& dy);
  // log of the integral of the energy over the plane, computed once.
  static double log_normalizer();
  static std::vector<double> sample(RngStream& rng);
};

// Four-component planar mixture with heavy-tailed and curved components.
class ComplexMixtureTarget : public DifferentiableTarget<ComplexMixtureTarget> {
 public:
  static constexpr double kWeights[4] = {0.2, 0.2, 0.1, 0.5};
  static constexpr double kCenters[4][2] = {{6.0, 0.0}, {0.0, 6.0}, {-3.0, -4.0}, {0.0, 0.0}};

  std::string name() const override { return "complex_mixture"; }
  int dim() const override { return 2; }
  bool normalized() const override { return true; }
  bool has_sampler() const override { return true; }
  Samples sample(std::size_t n, RngStream& rng) const override;
  // Draws with their component labels.
  Samples sample_labelled(std::size_t n, RngStream& rng, std::vector<int>& labels) const;

  template <class T>
  T component_log_density(int k, std::span<const T> z) const;
  template <class T>
  T eval(std::span<const T> z) const;
};

// Log-density of the standard Student-t with nu degrees of freedom.
template <class T>
T student_t_log_pdf(const T& x, double nu);

// Builds a target by name: nig, complex_mixture, std_normal (with dim), t2_t3.
std::unique_ptr<TargetDensity> make_target(const std::string& name, int dim = 2);

}  // namespace stictaf
