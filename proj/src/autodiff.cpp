#include "stictaf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "stictaf/numerics.hpp"

namespace stictaf::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::log1p: return "log1p";
    case Op::expm1: return "expm1";
    case Op::sqrt: return "sqrt";
    case Op::tanh: return "tanh";
    case Op::pow: return "pow";
    case Op::softplus: return "softplus";
    case Op::sigmoid: return "sigmoid";
    case Op::log_sigmoid: return "log_sigmoid";
    case Op::erfc: return "erfc";
    case Op::log_erfc: return "log_erfc";
    case Op::erfcinv_log: return "erfcinv_log";
    case Op::abs: return "abs";
    case Op::log_sum_exp: return "log_sum_exp";
    case Op::dot: return "dot";
    case Op::sum: return "sum";
    case Op::custom: return "custom";
  }
  return "unknown";
}

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() { return g_active; }

ScopedTape::ScopedTape(Tape& tape) : previous_(g_active) { g_active = &tape; }
ScopedTape::~ScopedTape() { g_active = previous_; }

Tape& detail::require_tape() {
  if (!g_active) throw std::logic_error("autodiff: no active tape for a recorded variable");
  return *g_active;
}

void Tape::check(Op op, double value) const {
  if (!std::isfinite(value)) {
    throw NonFiniteError("autodiff: non-finite value " + std::to_string(value) + " at node " +
                             std::to_string(nodes_.size()) + " (" + op_name(op) + ")",
                         static_cast<std::int64_t>(nodes_.size()));
  }
}

Var Tape::finish(double value) {
  adj_.push_back(0.0);
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::leaf(double value) {
  check(Op::leaf, value);
  nodes_.push_back({static_cast<std::uint32_t>(edges_.size()), Op::leaf});
  return finish(value);
}

Var Tape::push(Op op, double value, std::int32_t p0, double d0) {
  check(op, value);
  check(op, d0);
  nodes_.push_back({static_cast<std::uint32_t>(edges_.size()), op});
  edges_.push_back({p0, d0});
  return finish(value);
}

Var Tape::push(Op op, double value, std::int32_t p0, double d0, std::int32_t p1, double d1) {
  check(op, value);
  check(op, d0);
  check(op, d1);
  nodes_.push_back({static_cast<std::uint32_t>(edges_.size()), op});
  edges_.push_back({p0, d0});
  edges_.push_back({p1, d1});
  return finish(value);
}

Var Tape::push(Op op, double value, std::span<const std::int32_t> parents,
               std::span<const double> partials) {
  check(op, value);
  for (double d : partials) check(op, d);
  nodes_.push_back({static_cast<std::uint32_t>(edges_.size()), op});
  for (std::size_t i = 0; i < parents.size(); ++i) edges_.push_back({parents[i], partials[i]});
  return finish(value);
}

void Tape::rewind(std::size_t mark) {
  if (mark >= nodes_.size()) return;
  edges_.resize(nodes_[mark].edge_begin);
  nodes_.resize(mark);
  adj_.resize(mark);
}

void Tape::zero_adjoints() { std::fill(adj_.begin(), adj_.end(), 0.0); }

void Tape::seed(const Var& y, double weight) {
  if (y.id < 0) return;
  adj_[static_cast<std::size_t>(y.id)] += weight;
}

void Tape::propagate(std::size_t hi, std::size_t lo) {
  hi = std::min(hi, nodes_.size());
  for (std::size_t i = hi; i-- > lo;) {
    const double a = adj_[i];
    if (a == 0.0) continue;
    const std::size_t e_end = (i + 1 < nodes_.size()) ? nodes_[i + 1].edge_begin : edges_.size();
    for (std::size_t e = nodes_[i].edge_begin; e < e_end; ++e) {
      adj_[static_cast<std::size_t>(edges_[e].parent)] += a * edges_[e].partial;
    }
  }
}

double Tape::adjoint(const Var& x) const {
  if (x.id < 0) return 0.0;
  return adj_[static_cast<std::size_t>(x.id)];
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  nodes_.reserve(nodes);
  adj_.reserve(nodes);
  edges_.reserve(edges);
}

using detail::unary;

Var exp(const Var& x) {
  const double e = std::exp(x.v);
  return unary(Op::exp, e, x, e);
}

Var log(const Var& x) { return unary(Op::log, std::log(x.v), x, 1.0 / x.v); }

Var log1p(const Var& x) { return unary(Op::log1p, std::log1p(x.v), x, 1.0 / (1.0 + x.v)); }

Var expm1(const Var& x) { return unary(Op::expm1, std::expm1(x.v), x, std::exp(x.v)); }

Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  return unary(Op::sqrt, s, x, 0.5 / s);
}

Var tanh(const Var& x) {
  const double t = std::tanh(x.v);
  return unary(Op::tanh, t, x, 1.0 - t * t);
}

Var pow(const Var& x, double p) {
  const double v = std::pow(x.v, p);
  return unary(Op::pow, v, x, p * std::pow(x.v, p - 1.0));
}

Var pow(const Var& x, const Var& p) {
  const double v = std::pow(x.v, p.v);
  return detail::binary(Op::pow, v, x, p.v * std::pow(x.v, p.v - 1.0), p,
                        x.v > 0.0 ? v * std::log(x.v) : 0.0);
}

Var softplus(const Var& x) { return unary(Op::softplus, stictaf::softplus(x.v), x, stictaf::sigmoid(x.v)); }

Var sigmoid(const Var& x) {
  const double s = stictaf::sigmoid(x.v);
  return unary(Op::sigmoid, s, x, s * (1.0 - s));
}

Var log_sigmoid(const Var& x) {
  return unary(Op::log_sigmoid, -stictaf::softplus(-x.v), x, stictaf::sigmoid(-x.v));
}

Var erfc(const Var& x) {
  return unary(Op::erfc, stictaf::erfc(x.v), x, -2.0 / kSqrtPi * std::exp(-x.v * x.v));
}

Var log_erfc(const Var& x) {
  // d/dx log erfc(x) = -2 exp(-x^2) / (sqrt(pi) erfc(x)) = -2 / (sqrt(pi) erfcx(x))
  return unary(Op::log_erfc, stictaf::log_erfc(x.v), x, -2.0 / (kSqrtPi * stictaf::erfcx(x.v)));
}

Var erfcinv_log(const Var& log_p) {
  const double x = stictaf::erfcinv_log(log_p.v);
  return unary(Op::erfcinv_log, x, log_p, -0.5 * kSqrtPi * stictaf::erfcx(x));
}

Var abs(const Var& x) {
  const double s = x.v > 0.0 ? 1.0 : (x.v < 0.0 ? -1.0 : 0.0);
  return unary(Op::abs, std::abs(x.v), x, s);
}

Var log_sum_exp(std::span<const Var> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& x : xs) m = std::max(m, x.v);
  if (!std::isfinite(m)) {
    throw NonFiniteError("autodiff: log_sum_exp over non-finite terms", -1);
  }
  double s = 0.0;
  for (const auto& x : xs) s += std::exp(x.v - m);
  const double value = m + std::log(s);
  std::vector<std::int32_t> parents;
  std::vector<double> partials;
  for (const auto& x : xs) {
    if (x.id < 0) continue;
    parents.push_back(x.id);
    partials.push_back(std::exp(x.v - value));
  }
  if (parents.empty()) return Var(value);
  return detail::require_tape().push(Op::log_sum_exp, value, parents, partials);
}

Var sum(std::span<const Var> xs) {
  double value = 0.0;
  std::vector<std::int32_t> parents;
  for (const auto& x : xs) {
    value += x.v;
    if (x.id >= 0) parents.push_back(x.id);
  }
  if (parents.empty()) return Var(value);
  std::vector<double> ones(parents.size(), 1.0);
  return detail::require_tape().push(Op::sum, value, parents, ones);
}

Var dot(std::span<const Var> a, std::span<const Var> b, const Var& c) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double value = c.v;
  thread_local std::vector<std::int32_t> parents;
  thread_local std::vector<double> partials;
  parents.clear();
  partials.clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    value += a[i].v * b[i].v;
    if (a[i].id >= 0) {
      parents.push_back(a[i].id);
      partials.push_back(b[i].v);
    }
    if (b[i].id >= 0) {
      parents.push_back(b[i].id);
      partials.push_back(a[i].v);
    }
  }
  if (c.id >= 0) {
    parents.push_back(c.id);
    partials.push_back(1.0);
  }
  if (parents.empty()) return Var(value);
  return detail::require_tape().push(Op::dot, value, parents, partials);
}

Var dot(std::span<const double> w, std::span<const Var> x, const Var& c) {
  if (w.size() != x.size()) throw std::invalid_argument("dot: size mismatch");
  double value = c.v;
  thread_local std::vector<std::int32_t> parents;
  thread_local std::vector<double> partials;
  parents.clear();
  partials.clear();
  for (std::size_t i = 0; i < w.size(); ++i) {
    value += w[i] * x[i].v;
    if (x[i].id >= 0 && w[i] != 0.0) {
      parents.push_back(x[i].id);
      partials.push_back(w[i]);
    }
  }
  if (c.id >= 0) {
    parents.push_back(c.id);
    partials.push_back(1.0);
  }
  if (parents.empty()) return Var(value);
  return detail::require_tape().push(Op::dot, value, parents, partials);
}

Var custom(double value, std::span<const Var> inputs, std::span<const double> partials) {
  if (inputs.size() != partials.size()) throw std::invalid_argument("custom: size mismatch");
  std::vector<std::int32_t> parents;
  std::vector<double> d;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].id < 0) continue;
    parents.push_back(inputs[i].id);
    d.push_back(partials[i]);
  }
  if (parents.empty()) return Var(value);
  return detail::require_tape().push(Op::custom, value, parents, d);
}

std::map<std::string, double> grad(const std::function<Var(std::span<const Var>)>& f,
                                   std::span<const Parameter> params) {
  std::set<std::string> tags;
  for (const auto& p : params) {
    if (!tags.insert(p.tag).second) throw std::invalid_argument("grad: duplicate tag " + p.tag);
  }
  Tape tape;
  ScopedTape scope(tape);
  std::vector<Var> xs;
  xs.reserve(params.size());
  for (const auto& p : params) xs.push_back(tape.leaf(p.value));
  const Var y = f(xs);
  if (!std::isfinite(y.v)) throw NonFiniteError("grad: non-finite output", -1);
  tape.seed(y);
  tape.propagate(tape.size());
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < params.size(); ++i) out[params[i].tag] = tape.adjoint(xs[i]);
  return out;
}

ValueGrad value_and_gradient(const std::function<Var(std::span<const Var>)>& f,
                             std::span<const double> x) {
  Tape tape;
  ScopedTape scope(tape);
  std::vector<Var> xs;
  xs.reserve(x.size());
  for (double v : x) xs.push_back(tape.leaf(v));
  const Var y = f(xs);
  ValueGrad out{y.v, std::vector<double>(x.size(), 0.0)};
  if (!std::isfinite(y.v)) throw NonFiniteError("value_and_gradient: non-finite output", -1);
  tape.seed(y);
  tape.propagate(tape.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.gradient[i] = tape.adjoint(xs[i]);
  return out;
}

}  // namespace stictaf::ad
