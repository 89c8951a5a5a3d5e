#include "stictaf/flow_backbone.hpp"

#include <algorithm>
#include <cmath>

namespace stictaf {

namespace {

template <class T>
struct Knots {
  std::vector<T> xs, ys, ds;  // bins + 1 entries each
};

template <class T>
std::vector<T> bounded_softmax(std::span<const T> raw, double min_size, double total) {
  const std::size_t n = raw.size();
  double m = sc::value(raw[0]);
  for (const auto& r : raw) m = std::max(m, sc::value(r));
  std::vector<T> e(n);
  T s = T(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = sc::exp(raw[i] - m);
    s = s + e[i];
  }
  const double scale = 1.0 - min_size * static_cast<double>(n);
  for (auto& v : e) v = (min_size + scale * (v / s)) * total;
  return e;
}

template <class T>
Knots<T> make_knots(std::span<const T> raw, const SplineConfig& cfg) {
  const int K = cfg.bins;
  const double B = cfg.bound;
  Knots<T> kn;
  auto w = bounded_softmax<T>(raw.subspan(0, K), cfg.min_width, 2.0 * B);
  auto h = bounded_softmax<T>(raw.subspan(K, K), cfg.min_height, 2.0 * B);
  kn.xs.resize(K + 1);
  kn.ys.resize(K + 1);
  kn.ds.resize(K + 1);
  kn.xs[0] = T(-B);
  kn.ys[0] = T(-B);
  for (int k = 1; k < K; ++k) {
    kn.xs[k] = kn.xs[k - 1] + w[k - 1];
    kn.ys[k] = kn.ys[k - 1] + h[k - 1];
  }
  kn.xs[K] = T(B);
  kn.ys[K] = T(B);
  // Offset so that a zero raw derivative maps to exactly 1.
  const double c0 = std::log(std::expm1(1.0 - cfg.min_derivative));
  kn.ds[0] = T(1.0);
  kn.ds[K] = T(1.0);
  for (int k = 1; k < K; ++k) kn.ds[k] = cfg.min_derivative + sc::softplus(raw[2 * K + k - 1] + c0);
  return kn;
}

template <class T>
int find_bin(const std::vector<T>& knots, double v) {
  const int K = static_cast<int>(knots.size()) - 1;
  int k = 0;
  while (k + 1 < K && v >= sc::value(knots[k + 1])) ++k;
  return k;
}

template <class T>
void check_layer(const std::vector<T>& v, const T& log_det, int layer) {
  for (const auto& x : v) {
    if (!std::isfinite(sc::value(x)))
      throw FlowError("flow: non-finite output in layer " + std::to_string(layer), layer);
  }
  if (!std::isfinite(sc::value(log_det)))
    throw FlowError("flow: non-finite log-determinant in layer " + std::to_string(layer), layer);
}

}  // namespace

template <class T>
ScalarMap<T> rqs_forward(std::span<const T> raw, const T& x, const SplineConfig& cfg) {
  const double xv = sc::value(x);
  if (!(xv >= -cfg.bound && xv <= cfg.bound)) return {x, T(0.0)};
  const auto kn = make_knots<T>(raw, cfg);
  const int k = find_bin(kn.xs, xv);
  const T w = kn.xs[k + 1] - kn.xs[k];
  const T h = kn.ys[k + 1] - kn.ys[k];
  const T s = h / w;
  const T xi = (x - kn.xs[k]) / w;
  const T om = 1.0 - xi;
  const T xo = xi * om;
  const T denom = s + (kn.ds[k + 1] + kn.ds[k] - 2.0 * s) * xo;
  const T y = kn.ys[k] + h * (s * xi * xi + kn.ds[k] * xo) / denom;
  const T num = s * s * (kn.ds[k + 1] * xi * xi + 2.0 * s * xo + kn.ds[k] * om * om);
  return {y, sc::log(num) - 2.0 * sc::log(denom)};
}

template <class T>
ScalarMap<T> rqs_inverse(std::span<const T> raw, const T& y, const SplineConfig& cfg) {
  const double yv = sc::value(y);
  if (!(yv >= -cfg.bound && yv <= cfg.bound)) return {y, T(0.0)};
  const auto kn = make_knots<T>(raw, cfg);
  const int k = find_bin(kn.ys, yv);
  const T w = kn.xs[k + 1] - kn.xs[k];
  const T h = kn.ys[k + 1] - kn.ys[k];
  const T s = h / w;
  const T dy = y - kn.ys[k];
  const T mix = kn.ds[k + 1] + kn.ds[k] - 2.0 * s;
  const T a = h * (s - kn.ds[k]) + dy * mix;
  const T b = h * kn.ds[k] - dy * mix;
  const T c = -s * dy;
  const T disc = b * b - 4.0 * a * c;
  const T xi = (2.0 * c) / (-b - sc::sqrt(disc));
  const T om = 1.0 - xi;
  const T xo = xi * om;
  const T denom = s + mix * xo;
  const T num = s * s * (kn.ds[k + 1] * xi * xi + 2.0 * s * xo + kn.ds[k] * om * om);
  return {kn.xs[k] + xi * w, 2.0 * sc::log(denom) - sc::log(num)};
}

template ScalarMap<double> rqs_forward<double>(std::span<const double>, const double&, const SplineConfig&);
template ScalarMap<ad::Var> rqs_forward<ad::Var>(std::span<const ad::Var>, const ad::Var&, const SplineConfig&);
template ScalarMap<double> rqs_inverse<double>(std::span<const double>, const double&, const SplineConfig&);
template ScalarMap<ad::Var> rqs_inverse<ad::Var>(std::span<const ad::Var>, const ad::Var&, const SplineConfig&);

void FlowStack::build_layout() {
  const int d = cfg_.d, H = cfg_.hidden, P = cfg_.spline.raw_size();
  cond_offset_.assign(cfg_.blocks, std::vector<std::size_t>(d));
  lu_offset_.assign(cfg_.blocks, 0);
  std::size_t off = 0;
  for (int b = 0; b < cfg_.blocks; ++b) {
    for (int i = 0; i < d; ++i) {
      cond_offset_[b][i] = off;
      off += static_cast<std::size_t>(H * i + H + P * H + P);
    }
    lu_offset_[b] = off;
    off += static_cast<std::size_t>(d * (d - 1) + 2 * d);
  }
  params_.assign(off, 0.0);
}

std::size_t FlowStack::cond_offset(int block, int coord) const { return cond_offset_.at(block).at(coord); }

FlowStack FlowStack::identity(const FlowConfig& cfg, RngStream& rng) {
  if (cfg.d < 1 || cfg.blocks < 0 || cfg.hidden < 1 || cfg.spline.bins < 1 || !(cfg.spline.bound > 0))
    throw std::invalid_argument("FlowStack: invalid configuration");
  if (cfg.spline.min_width * cfg.spline.bins >= 1.0 || cfg.spline.min_height * cfg.spline.bins >= 1.0 ||
      !(cfg.spline.min_derivative < 1.0))
    throw std::invalid_argument("FlowStack: spline minima too large for the bin count");
  FlowStack f;
  f.cfg_ = cfg;
  f.build_layout();
  const int d = cfg.d, H = cfg.hidden;
  const double diag_raw = softplus_inv(1.0 - kLuDiagFloor);
  for (int b = 0; b < cfg.blocks; ++b) {
    for (int i = 0; i < d; ++i) {
      std::size_t o = f.cond_offset_[b][i];
      const double lim = 1.0 / std::sqrt(static_cast<double>(std::max(i, 1)));
      for (int m = 0; m < H * i; ++m) f.params_[o + m] = lim * (2.0 * rng.uniform() - 1.0);
      o += static_cast<std::size_t>(H * i);
      for (int m = 0; m < H; ++m) f.params_[o + m] = 2.0 * rng.uniform() - 1.0;
      // output layer stays zero: the spline starts as the identity
    }
    const std::size_t lu = f.lu_offset_[b] + static_cast<std::size_t>(d * (d - 1));
    for (int i = 0; i < d; ++i) f.params_[lu + i] = diag_raw;
  }
  return f;
}

void FlowStack::set_lu_upper_diag(int block, std::span<const double> diag) {
  const int d = cfg_.d;
  if (static_cast<int>(diag.size()) != d) throw std::invalid_argument("set_lu_upper_diag: size");
  const std::size_t lu = lu_offset_.at(block) + static_cast<std::size_t>(d * (d - 1));
  for (int i = 0; i < d; ++i) {
    if (!(diag[i] > kLuDiagFloor)) throw std::invalid_argument("set_lu_upper_diag: diagonal below floor");
    params_[lu + i] = softplus_inv(diag[i] - kLuDiagFloor);
  }
}

std::vector<FlowStack::Segment> FlowStack::segments() const {
  std::vector<Segment> out;
  const int d = cfg_.d, H = cfg_.hidden, P = cfg_.spline.raw_size();
  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b);
    for (int i = 0; i < d; ++i) {
      const std::string c = pre + ".spline.cond" + std::to_string(i);
      std::size_t o = cond_offset_[b][i];
      out.push_back({c + ".W1", o, static_cast<std::size_t>(H * i)});
      o += H * i;
      out.push_back({c + ".b1", o, static_cast<std::size_t>(H)});
      o += H;
      out.push_back({c + ".W2", o, static_cast<std::size_t>(P * H)});
      o += P * H;
      out.push_back({c + ".b2", o, static_cast<std::size_t>(P)});
    }
    const std::size_t half = static_cast<std::size_t>(d * (d - 1) / 2);
    std::size_t o = lu_offset_[b];
    out.push_back({pre + ".lu.lower", o, half});
    out.push_back({pre + ".lu.upper", o + half, half});
    out.push_back({pre + ".lu.upper_diag_raw", o + 2 * half, static_cast<std::size_t>(d)});
    out.push_back({pre + ".lu.bias", o + 2 * half + d, static_cast<std::size_t>(d)});
  }
  return out;
}

namespace {

template <class T>
std::vector<T> conditioner(std::span<const T> psi, std::size_t off, int H, int P,
                           std::span<const T> inputs) {
  const int in = static_cast<int>(inputs.size());
  std::vector<T> hidden(H);
  const std::size_t b1 = off + static_cast<std::size_t>(H * in);
  for (int m = 0; m < H; ++m) {
    hidden[m] = sc::tanh(sc::dot(psi.subspan(off + static_cast<std::size_t>(m * in), in), inputs, psi[b1 + m]));
  }
  const std::size_t w2 = b1 + H;
  const std::size_t b2 = w2 + static_cast<std::size_t>(P * H);
  std::vector<T> raw(P);
  std::span<const T> hs(hidden);
  for (int p = 0; p < P; ++p) {
    raw[p] = sc::dot(psi.subspan(w2 + static_cast<std::size_t>(p * H), H), hs, psi[b2 + p]);
  }
  return raw;
}

struct LuLayout {
  std::size_t lower, upper, diag, bias;
};

LuLayout lu_layout(std::size_t off, int d) {
  const std::size_t half = static_cast<std::size_t>(d * (d - 1) / 2);
  return {off, off + half, off + 2 * half, off + 2 * half + d};
}

// Row i of the strict lower factor holds entries j < i.
inline std::size_t lower_row(int i) { return static_cast<std::size_t>(i * (i - 1) / 2); }
// Row i of the strict upper factor holds entries j > i.
inline std::size_t upper_row(int i, int d) {
  return static_cast<std::size_t>(i * (d - 1) - i * (i - 1) / 2);
}

template <class T>
std::vector<T> lu_diag(std::span<const T> psi, const LuLayout& L, int d) {
  std::vector<T> diag(d);
  for (int i = 0; i < d; ++i) diag[i] = sc::softplus(psi[L.diag + i]) + kLuDiagFloor;
  return diag;
}

}  // namespace

template <class T>
FlowResult<T> FlowStack::forward(std::span<const T> psi, std::span<const T> z) const {
  const int d = cfg_.d, H = cfg_.hidden, P = cfg_.spline.raw_size();
  if (static_cast<int>(z.size()) != d) throw std::invalid_argument("flow forward: dimension mismatch");
  if (psi.size() != params_.size()) throw std::invalid_argument("flow forward: parameter size mismatch");
  std::vector<T> cur(z.begin(), z.end());
  T log_det = T(0.0);
  for (int b = 0; b < cfg_.blocks; ++b) {
    int layer = 2 * b;
    try {
      std::vector<T> next(d);
      T ld = T(0.0);
      for (int i = 0; i < d; ++i) {
        auto raw = conditioner<T>(psi, cond_offset_[b][i], H, P, std::span<const T>(cur).subspan(0, i));
        auto m = rqs_forward<T>(std::span<const T>(raw), cur[i], cfg_.spline);
        next[i] = m.y;
        ld = ld + m.log_deriv;
      }
      check_layer(next, ld, layer);
      cur = std::move(next);
      log_det = log_det + ld;

      layer = 2 * b + 1;
      const auto L = lu_layout(lu_offset_[b], d);
      const auto diag = lu_diag<T>(psi, L, d);
      std::vector<T> p(d), u(d), y(d);
      for (int j = 0; j < d; ++j) p[j] = cur[d - 1 - j];
      std::span<const T> ps(p);
      for (int i = 0; i < d; ++i) {
        u[i] = sc::dot(psi.subspan(L.upper + upper_row(i, d), d - 1 - i), ps.subspan(i + 1), diag[i] * p[i]);
      }
      std::span<const T> us(u);
      for (int i = 0; i < d; ++i) {
        y[i] = sc::dot(psi.subspan(L.lower + lower_row(i), i), us.subspan(0, i), u[i] + psi[L.bias + i]);
      }
      T lu_ld = T(0.0);
      for (int i = 0; i < d; ++i) lu_ld = lu_ld + sc::log(diag[i]);
      check_layer(y, lu_ld, layer);
      cur = std::move(y);
      log_det = log_det + lu_ld;
    } catch (const ad::NonFiniteError& e) {
      throw FlowError(std::string("flow forward: layer ") + std::to_string(layer) + ": " + e.what(), layer);
    }
  }
  return {std::move(cur), log_det};
}

template <class T>
FlowResult<T> FlowStack::inverse(std::span<const T> psi, std::span<const T> x) const {
  const int d = cfg_.d, H = cfg_.hidden, P = cfg_.spline.raw_size();
  if (static_cast<int>(x.size()) != d) throw std::invalid_argument("flow inverse: dimension mismatch");
  if (psi.size() != params_.size()) throw std::invalid_argument("flow inverse: parameter size mismatch");
  std::vector<T> cur(x.begin(), x.end());
  T log_det = T(0.0);
  for (int b = cfg_.blocks - 1; b >= 0; --b) {
    int layer = 2 * b + 1;
    try {
      const auto L = lu_layout(lu_offset_[b], d);
      const auto diag = lu_diag<T>(psi, L, d);
      std::vector<T> u(d), p(d), z(d);
      for (int i = 0; i < d; ++i) {
        const T acc = sc::dot(psi.subspan(L.lower + lower_row(i), i), std::span<const T>(u).subspan(0, i));
        u[i] = cur[i] - psi[L.bias + i] - acc;
      }
      for (int i = d - 1; i >= 0; --i) {
        const T acc = sc::dot(psi.subspan(L.upper + upper_row(i, d), d - 1 - i),
                              std::span<const T>(p).subspan(i + 1));
        p[i] = (u[i] - acc) / diag[i];
      }
      for (int j = 0; j < d; ++j) z[d - 1 - j] = p[j];
      T lu_ld = T(0.0);
      for (int i = 0; i < d; ++i) lu_ld = lu_ld - sc::log(diag[i]);
      check_layer(z, lu_ld, layer);
      cur = std::move(z);
      log_det = log_det + lu_ld;

      layer = 2 * b;
      std::vector<T> prev(d);
      T ld = T(0.0);
      for (int i = 0; i < d; ++i) {
        auto raw = conditioner<T>(psi, cond_offset_[b][i], H, P, std::span<const T>(prev).subspan(0, i));
        auto m = rqs_inverse<T>(std::span<const T>(raw), cur[i], cfg_.spline);
        prev[i] = m.y;
        ld = ld + m.log_deriv;
      }
      check_layer(prev, ld, layer);
      cur = std::move(prev);
      log_det = log_det + ld;
    } catch (const ad::NonFiniteError& e) {
      throw FlowError(std::string("flow inverse: layer ") + std::to_string(layer) + ": " + e.what(), layer);
    }
  }
  return {std::move(cur), log_det};
}

template FlowResult<double> FlowStack::forward<double>(std::span<const double>, std::span<const double>) const;
template FlowResult<ad::Var> FlowStack::forward<ad::Var>(std::span<const ad::Var>, std::span<const ad::Var>) const;
template FlowResult<double> FlowStack::inverse<double>(std::span<const double>, std::span<const double>) const;
template FlowResult<ad::Var> FlowStack::inverse<ad::Var>(std::span<const ad::Var>, std::span<const ad::Var>) const;

}  // namespace stictaf
