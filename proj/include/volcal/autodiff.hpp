#pragma once

// Scalar reverse-mode tape. This is the generic differentiation route behind
// param_gradient: closures evaluate on Var (including jet propagation, so
// losses may contain input derivatives of the networks) and one reverse sweep
// returns exact parameter gradients. The batched Eigen engine is the fast
// route; the two are cross-checked in the tests.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace volcal::ad {

class Tape;

/// A value recorded on a tape, or a free constant (tape == nullptr).
/// Constants fold so templated numeric code (Jet<Var>) can mix literals in.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  double val = 0.0;

  Var() = default;
  Var(double v) : val(v) {}  // NOLINT: implicit constant lift is the point
  Var(Tape* t, int i, double v) : tape(t), idx(i), val(v) {}

  bool is_const() const { return tape == nullptr; }
};

class Tape {
 public:
  struct Node {
    int p1 = -1, p2 = -1;
    double d1 = 0.0, d2 = 0.0;
  };

  Var leaf(double v) {
    nodes_.emplace_back();
    return {this, static_cast<int>(nodes_.size()) - 1, v};
  }

  Var unary(double v, const Var& p, double d) {
    if (p.is_const()) return Var(v);
    nodes_.push_back({p.idx, -1, d, 0.0});
    return {this, static_cast<int>(nodes_.size()) - 1, v};
  }

  Var binary(double v, const Var& a, double da, const Var& b, double db) {
    if (a.is_const()) return unary(v, b, db);
    if (b.is_const()) return unary(v, a, da);
    nodes_.push_back({a.idx, b.idx, da, db});
    return {this, static_cast<int>(nodes_.size()) - 1, v};
  }

  /// Reverse sweep from `output`; returns d output / d node for every node.
  /// Node order is already topological (construction order).
  std::vector<double> gradient(const Var& output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output.is_const()) return adj;
    adj[static_cast<std::size_t>(output.idx)] = 1.0;
    for (int i = output.idx; i >= 0; --i) {
      double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.p1 >= 0) adj[static_cast<std::size_t>(n.p1)] += a * n.d1;
      if (n.p2 >= 0) adj[static_cast<std::size_t>(n.p2)] += a * n.d2;
    }
    return adj;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) {
  return a.tape ? a.tape : b.tape;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.val + b.val);
  return t->binary(a.val + b.val, a, 1.0, b, 1.0);
}

inline Var operator-(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.val - b.val);
  return t->binary(a.val - b.val, a, 1.0, b, -1.0);
}

inline Var operator-(const Var& a) {
  if (a.is_const()) return Var(-a.val);
  return a.tape->unary(-a.val, a, -1.0);
}

inline Var operator*(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.val * b.val);
  return t->binary(a.val * b.val, a, b.val, b, a.val);
}

inline Var operator/(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.val / b.val);
  double inv = 1.0 / b.val;
  return t->binary(a.val * inv, a, inv, b, -a.val * inv * inv);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }

inline Var exp(const Var& a) {
  double e = std::exp(a.val);
  if (a.is_const()) return Var(e);
  return a.tape->unary(e, a, e);
}

inline Var log(const Var& a) {
  if (a.is_const()) return Var(std::log(a.val));
  return a.tape->unary(std::log(a.val), a, 1.0 / a.val);
}

inline Var log1p(const Var& a) {
  if (a.is_const()) return Var(std::log1p(a.val));
  return a.tape->unary(std::log1p(a.val), a, 1.0 / (1.0 + a.val));
}

inline Var sqrt(const Var& a) {
  double s = std::sqrt(a.val);
  if (a.is_const()) return Var(s);
  return a.tape->unary(s, a, 0.5 / s);
}

/// (x)^+ with subgradient 0 at the kink.
inline Var relu(const Var& a) {
  if (a.val > 0.0) return a;
  return Var(0.0);
}

inline Var softplus(const Var& a) {
  if (a.val > 0.0) return a + log1p(exp(-a));
  return log1p(exp(a));
}

inline Var logistic(const Var& a) {
  if (a.val >= 0.0) return Var(1.0) / (Var(1.0) + exp(-a));
  Var e = exp(a);
  return e / (Var(1.0) + e);
}

}  // namespace volcal::ad
