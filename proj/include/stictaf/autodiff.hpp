#pragma once

// Reverse-mode automatic differentiation on a Wengert list.
//
// Every operation on a Var that depends on a recorded node appends one node
// to the thread's active tape, storing the value and the local partial
// derivative towards each parent. Operations whose inputs are all constants
// are evaluated without touching the tape.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stictaf::ad {

struct NonFiniteError : std::runtime_error {
  NonFiniteError(const std::string& what, std::int64_t node) : std::runtime_error(what), node(node) {}
  std::int64_t node;
};

enum class Op : std::uint8_t {
  leaf, add, sub, mul, div, neg, exp, log, log1p, expm1, sqrt, tanh, pow, softplus,
  sigmoid, log_sigmoid, erfc, log_erfc, erfcinv_log, abs, log_sum_exp, dot, sum, custom
};

const char* op_name(Op op);

struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are intended
  Var(double value, std::int32_t node) : v(value), id(node) {}

  bool is_constant() const { return id < 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(double value);

  Var push(Op op, double value, std::int32_t p0, double d0);
  Var push(Op op, double value, std::int32_t p0, double d0, std::int32_t p1, double d1);
  Var push(Op op, double value, std::span<const std::int32_t> parents,
           std::span<const double> partials);

  std::size_t size() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  // Nodes created after mark() can be dropped with rewind(mark) once their
  // adjoints have been pushed back into the older part of the tape.
  std::size_t mark() const { return nodes_.size(); }
  void rewind(std::size_t mark);
  void clear() { rewind(0); }

  void zero_adjoints();
  void seed(const Var& y, double weight = 1.0);
  // Propagates adjoints of nodes with index in [lo, hi) to their parents,
  // visiting nodes in decreasing index order exactly once.
  void propagate(std::size_t hi, std::size_t lo = 0);
  double adjoint(const Var& x) const;

  void reserve(std::size_t nodes, std::size_t edges);

 private:
  struct Node {
    std::uint32_t edge_begin;
    Op op;
  };
  struct Edge {
    std::int32_t parent;
    double partial;
  };

  void check(Op op, double value) const;
  Var finish(double value);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<double> adj_;
};

Tape* active_tape();

// Makes `tape` the active tape for this thread until destruction.
class ScopedTape {
 public:
  explicit ScopedTape(Tape& tape);
  ~ScopedTape();
  ScopedTape(const ScopedTape&) = delete;
  ScopedTape& operator=(const ScopedTape&) = delete;

 private:
  Tape* previous_;
};

namespace detail {
Tape& require_tape();

inline Var unary(Op op, double value, const Var& a, double da) {
  if (a.id < 0) return Var(value);
  return require_tape().push(op, value, a.id, da);
}

inline Var binary(Op op, double value, const Var& a, double da, const Var& b, double db) {
  if (a.id < 0 && b.id < 0) return Var(value);
  if (b.id < 0) return require_tape().push(op, value, a.id, da);
  if (a.id < 0) return require_tape().push(op, value, b.id, db);
  return require_tape().push(op, value, a.id, da, b.id, db);
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(Op::add, a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(Op::sub, a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(Op::mul, a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(Op::div, q, a, 1.0 / b.v, b, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(Op::neg, -a.v, a, -1.0); }

inline Var operator+(const Var& a, double b) { return detail::unary(Op::add, a.v + b, a, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(Op::add, a + b.v, b, 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(Op::sub, a.v - b, a, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(Op::sub, a - b.v, b, -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(Op::mul, a.v * b, a, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(Op::mul, a * b.v, b, a); }
inline Var operator/(const Var& a, double b) { return detail::unary(Op::div, a.v / b, a, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.v;
  return detail::unary(Op::div, q, b, -q / b.v);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var exp(const Var& x);
Var log(const Var& x);
Var log1p(const Var& x);
Var expm1(const Var& x);
Var sqrt(const Var& x);
Var tanh(const Var& x);
Var pow(const Var& x, double p);
Var pow(const Var& x, const Var& p);
Var softplus(const Var& x);
Var sigmoid(const Var& x);
Var log_sigmoid(const Var& x);
Var erfc(const Var& x);
Var log_erfc(const Var& x);
Var erfcinv_log(const Var& log_p);
// Subgradient 0 at the kink.
Var abs(const Var& x);
Var log_sum_exp(std::span<const Var> xs);
Var sum(std::span<const Var> xs);
// c + sum_i a_i * b_i as a single node.
Var dot(std::span<const Var> a, std::span<const Var> b, const Var& c = Var(0.0));
// c + sum_i w_i * x_i with constant weights, as a single node.
Var dot(std::span<const double> w, std::span<const Var> x, const Var& c = Var(0.0));
// A node with externally supplied value and partial derivatives.
Var custom(double value, std::span<const Var> inputs, std::span<const double> partials);

struct Parameter {
  double value;
  std::string tag;
};

// Gradient of f at the parameter values, keyed by tag. Parameters that f does
// not use receive 0.
std::map<std::string, double> grad(const std::function<Var(std::span<const Var>)>& f,
                                   std::span<const Parameter> params);

struct ValueGrad {
  double value;
  std::vector<double> gradient;
};

ValueGrad value_and_gradient(const std::function<Var(std::span<const Var>)>& f,
                             std::span<const double> x);

}  // namespace stictaf::ad
