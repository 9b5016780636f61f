#pragma once

// Truncated jets in the scaled coordinates (k, t): value, d/dk, d/dt and
// d^2/dk^2. Propagating these through a network forward pass yields exact
// input derivatives in one sweep. The component type T is generic so the same
// composition rules serve plain evaluation (double), the reverse-mode tape
// (ad::Var) and per-point Jacobian extraction (Dual4).

#include <array>
#include <cmath>
#include <type_traits>

namespace volcal {

// Activation scalars. tanh is evaluated through exp so the scalar and the
// vectorized batched paths share one formula (Eigen vectorizes exp for
// double, not tanh).
template <class T>
T tanh_via_exp(const T& x) {
  using std::exp;
  return T(1.0) - T(2.0) / (exp(T(2.0) * x) + T(1.0));
}

inline double softplus(double x) {
  // Overflow-safe: x + log1p(e^{-x}) for x > 0.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

template <class T>
struct Jet {
  T v{};    // value
  T dk{};   // d/dk
  T dt{};   // d/dt
  T dkk{};  // d^2/dk^2

  Jet() = default;
  Jet(T v_, T dk_, T dt_, T dkk_)
      : v(std::move(v_)), dk(std::move(dk_)), dt(std::move(dt_)),
        dkk(std::move(dkk_)) {}

  static Jet constant(T c) { return Jet(std::move(c), T(0.0), T(0.0), T(0.0)); }
  static Jet var_k(T k) { return Jet(std::move(k), T(1.0), T(0.0), T(0.0)); }
  static Jet var_t(T t) { return Jet(std::move(t), T(0.0), T(1.0), T(0.0)); }
};

template <class T>
Jet<T> operator+(const Jet<T>& a, const Jet<T>& b) {
  return {a.v + b.v, a.dk + b.dk, a.dt + b.dt, a.dkk + b.dkk};
}

template <class T>
Jet<T> operator-(const Jet<T>& a, const Jet<T>& b) {
  return {a.v - b.v, a.dk - b.dk, a.dt - b.dt, a.dkk - b.dkk};
}

template <class T>
Jet<T> operator-(const Jet<T>& a) {
  return {-a.v, -a.dk, -a.dt, -a.dkk};
}

template <class T>
Jet<T> operator*(const Jet<T>& a, const Jet<T>& b) {
  return {a.v * b.v,
          a.dk * b.v + a.v * b.dk,
          a.dt * b.v + a.v * b.dt,
          a.dkk * b.v + T(2.0) * a.dk * b.dk + a.v * b.dkk};
}

template <class T>
Jet<T> operator*(const std::type_identity_t<T>& c, const Jet<T>& a) {
  return {c * a.v, c * a.dk, c * a.dt, c * a.dkk};
}

/// Composition with a scalar function given f(v), f'(v), f''(v).
template <class T>
Jet<T> compose(const Jet<T>& x, const T& f, const T& df, const T& ddf) {
  return {f, df * x.dk, df * x.dt, df * x.dkk + ddf * x.dk * x.dk};
}

template <class T>
Jet<T> exp(const Jet<T>& x) {
  using std::exp;
  T e = exp(x.v);
  return compose(x, e, e, e);
}

template <class T>
Jet<T> tanh_jet(const Jet<T>& x) {
  T u = tanh_via_exp(x.v);
  T s = T(1.0) - u * u;        // tanh'
  T c2 = T(-2.0) * u * s;      // tanh''
  return compose(x, u, s, c2);
}

/// Forward-mode dual with four partials; extracts the 4x4 Jacobian of the
/// per-point ansatz wrappers for the batched backward pass.
struct Dual4 {
  double v = 0.0;
  std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};

  Dual4() = default;
  Dual4(double v_) : v(v_) {}
  Dual4(double v_, std::array<double, 4> d_) : v(v_), d(d_) {}

  static Dual4 seeded(double v_, int slot) {
    Dual4 x(v_);
    x.d[static_cast<std::size_t>(slot)] = 1.0;
    return x;
  }
};

inline Dual4 operator+(const Dual4& a, const Dual4& b) {
  return {a.v + b.v,
          {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2], a.d[3] + b.d[3]}};
}

inline Dual4 operator-(const Dual4& a, const Dual4& b) {
  return {a.v - b.v,
          {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2], a.d[3] - b.d[3]}};
}

inline Dual4 operator-(const Dual4& a) {
  return {-a.v, {-a.d[0], -a.d[1], -a.d[2], -a.d[3]}};
}

inline Dual4 operator*(const Dual4& a, const Dual4& b) {
  return {a.v * b.v,
          {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1],
           a.d[2] * b.v + a.v * b.d[2], a.d[3] * b.v + a.v * b.d[3]}};
}

inline Dual4 operator/(const Dual4& a, const Dual4& b) {
  double inv = 1.0 / b.v;
  double q = a.v * inv;
  return {q,
          {(a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv,
           (a.d[2] - q * b.d[2]) * inv, (a.d[3] - q * b.d[3]) * inv}};
}

inline Dual4 exp(const Dual4& a) {
  double e = std::exp(a.v);
  return {e, {e * a.d[0], e * a.d[1], e * a.d[2], e * a.d[3]}};
}

}  // namespace volcal
