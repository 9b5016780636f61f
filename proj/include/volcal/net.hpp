#pragma once

// Residual-MLP function approximators and the boundary-enforcing ansatz
// wrappers. A network is: lift (2 -> width), `blocks` residual blocks
// x -> x + W2 act(W1 act(x) + b1) + b2, and a softplus head (width -> 1),
// tanh hidden activations throughout. Price surfaces wrap the raw net N as
//   call: pi = S0 (1 - e^{-(1-k) N}),    zero at k = 1, bounded by S0
//   put:  pi = K_max e^{r T_max t} k (1 - e^{-k N}),  zero at k = 0
// and the squared-vol surface is the raw net itself (softplus keeps it >= 0).
//
// Evaluation is templated on the scalar type so one set of composition rules
// serves plain doubles, the reverse-mode tape (parameter gradients through
// jet entries) and Dual4 Jacobian extraction in the batched engine.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "volcal/autodiff.hpp"
#include "volcal/core.hpp"
#include "volcal/errors.hpp"
#include "volcal/jet.hpp"

namespace volcal {

enum class HiddenActivation : std::uint8_t { Tanh = 0 };
enum class OutputActivation : std::uint8_t { Softplus = 0 };
enum class Normalization : std::uint8_t { None = 0, PerLayerAffine = 1 };

struct NetConfig {
  int blocks = 3;
  int width = 64;
  HiddenActivation hidden_activation = HiddenActivation::Tanh;
  OutputActivation output_activation = OutputActivation::Softplus;
  Normalization normalization = Normalization::None;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Offsets of every weight segment inside the flat parameter vector.
/// Matrices are column-major; the lift is width x 2, block matrices are
/// width x width, the head is a single row. PerLayerAffine inserts a
/// per-unit scale/shift pair after each linear except the head.
struct ParamLayout {
  struct Affine {
    int scale = -1, shift = -1;
  };
  struct Block {
    int w1 = 0, b1 = 0;
    Affine a1;
    int w2 = 0, b2 = 0;
    Affine a2;
  };

  int width = 0;
  int blocks = 0;
  bool affine = false;
  int lift_w = 0, lift_b = 0;
  Affine lift_a;
  std::vector<Block> block;
  int head_w = 0, head_b = 0;
  int total = 0;

  static ParamLayout make(const NetConfig& config);
};

/// Parameter storage is 64-byte aligned so vectorized kernels take the same
/// code path for logically identical values regardless of heap history;
/// results then depend only on (seed, config, data).
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct NetParams {
  NetConfig config;
  std::int64_t seed = 0;
  ParamVector values;

  ParamLayout layout() const { return ParamLayout::make(config); }
  bool finite() const;
  bool operator==(const NetParams&) const = default;
};

/// Deterministic variance-scaled uniform init: weights ~ U(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)), biases zero, affine scales one.
NetParams init_params(const NetConfig& config, std::int64_t seed);

struct PriceSurfaceModel {
  NetParams params;
  MarketFrame frame;
  OptionKind kind = OptionKind::Call;
};

struct VolSurfaceModel {
  NetParams params;
  MarketFrame frame;
};

PriceSurfaceModel make_price_model(NetParams params, const MarketFrame& frame);
VolSurfaceModel make_vol_model(NetParams params, const MarketFrame& frame);

// ---------------------------------------------------------------------------
// Templated evaluation core.

namespace detail {

template <class T>
T softplus_generic(const T& x) {
  using volcal::softplus;
  using volcal::ad::softplus;
  return softplus(x);
}

template <class T>
T logistic_generic(const T& x) {
  using volcal::logistic;
  using volcal::ad::logistic;
  return logistic(x);
}

template <class T>
Jet<T> softplus_jet(const Jet<T>& x) {
  T f = softplus_generic(x.v);
  T p = logistic_generic(x.v);
  return compose(x, f, p, p * (T(1.0) - p));
}

}  // namespace detail

/// Raw network value N(k, t) >= 0.
template <class T>
T net_value(const NetConfig& config, const ParamLayout& layout,
            std::span<const T> p, const T& k, const T& t) {
  const int w = config.width;
  std::vector<T> x(static_cast<std::size_t>(w));
  for (int r = 0; r < w; ++r)
    x[r] = p[layout.lift_w + r] * k + p[layout.lift_w + w + r] * t +
           p[layout.lift_b + r];
  if (layout.affine)
    for (int r = 0; r < w; ++r)
      x[r] = x[r] * p[layout.lift_a.scale + r] + p[layout.lift_a.shift + r];

  std::vector<T> h(static_cast<std::size_t>(w)), z(static_cast<std::size_t>(w));
  for (const auto& blk : layout.block) {
    for (int r = 0; r < w; ++r) h[r] = tanh_via_exp(x[r]);
    for (int r = 0; r < w; ++r) {
      T acc = p[blk.b1 + r];
      for (int c = 0; c < w; ++c) acc = acc + p[blk.w1 + c * w + r] * h[c];
      z[r] = acc;
    }
    if (layout.affine)
      for (int r = 0; r < w; ++r)
        z[r] = z[r] * p[blk.a1.scale + r] + p[blk.a1.shift + r];
    for (int r = 0; r < w; ++r) h[r] = tanh_via_exp(z[r]);
    for (int r = 0; r < w; ++r) {
      T acc = p[blk.b2 + r];
      for (int c = 0; c < w; ++c) acc = acc + p[blk.w2 + c * w + r] * h[c];
      z[r] = acc;
    }
    if (layout.affine)
      for (int r = 0; r < w; ++r)
        z[r] = z[r] * p[blk.a2.scale + r] + p[blk.a2.shift + r];
    for (int r = 0; r < w; ++r) x[r] = x[r] + z[r];
  }

  T u = p[layout.head_b];
  for (int c = 0; c < w; ++c) u = u + p[layout.head_w + c] * x[c];
  return detail::softplus_generic(u);
}

/// Raw network jet (value, d/dk, d/dt, d^2/dk^2).
template <class T>
Jet<T> net_jet(const NetConfig& config, const ParamLayout& layout,
               std::span<const T> p, const T& k, const T& t) {
  const int w = config.width;
  using J = Jet<T>;
  std::vector<J> x(static_cast<std::size_t>(w));
  for (int r = 0; r < w; ++r) {
    const T& wk = p[layout.lift_w + r];
    const T& wt = p[layout.lift_w + w + r];
    // Lift applied to input jets (k,1,0,0) and (t,0,1,0) directly.
    x[r] = J(wk * k + wt * t + p[layout.lift_b + r], wk, wt, T(0.0));
  }
  if (layout.affine)
    for (int r = 0; r < w; ++r)
      x[r] = p[layout.lift_a.scale + r] * x[r] +
             J::constant(p[layout.lift_a.shift + r]);

  std::vector<J> h(static_cast<std::size_t>(w)), z(static_cast<std::size_t>(w));
  for (const auto& blk : layout.block) {
    for (int r = 0; r < w; ++r) h[r] = tanh_jet(x[r]);
    for (int r = 0; r < w; ++r) {
      J acc = J::constant(p[blk.b1 + r]);
      for (int c = 0; c < w; ++c) acc = acc + p[blk.w1 + c * w + r] * h[c];
      z[r] = acc;
    }
    if (layout.affine)
      for (int r = 0; r < w; ++r)
        z[r] = p[blk.a1.scale + r] * z[r] + J::constant(p[blk.a1.shift + r]);
    for (int r = 0; r < w; ++r) h[r] = tanh_jet(z[r]);
    for (int r = 0; r < w; ++r) {
      J acc = J::constant(p[blk.b2 + r]);
      for (int c = 0; c < w; ++c) acc = acc + p[blk.w2 + c * w + r] * h[c];
      z[r] = acc;
    }
    if (layout.affine)
      for (int r = 0; r < w; ++r)
        z[r] = p[blk.a2.scale + r] * z[r] + J::constant(p[blk.a2.shift + r]);
    for (int r = 0; r < w; ++r) x[r] = x[r] + z[r];
  }

  J u = J::constant(p[layout.head_b]);
  for (int c = 0; c < w; ++c) u = u + p[layout.head_w + c] * x[c];
  return detail::softplus_jet(u);
}

/// Boundary-enforcing price wrapper applied to the raw net jet.
template <class T>
Jet<T> price_ansatz_jet(const Jet<T>& n, const T& k, const T& t,
                        const MarketFrame& frame, OptionKind kind) {
  using J = Jet<T>;
  J one = J::constant(T(1.0));
  J kj = J::var_k(k);
  if (kind == OptionKind::Call) {
    J decay = exp(-((one - kj) * n));
    return frame.spot * (one - decay);
  }
  J growth = exp(T(frame.rate * frame.t_max) * J::var_t(t));
  J factor = one - exp(-(kj * n));
  return frame.k_max * (growth * (kj * factor));
}

/// Full ansatz jet for a parameter span (net + wrapper).
template <class T>
Jet<T> model_price_jet(const NetConfig& config, const ParamLayout& layout,
                       std::span<const T> p, const MarketFrame& frame,
                       OptionKind kind, const T& k, const T& t) {
  return price_ansatz_jet(net_jet(config, layout, p, k, t), k, t, frame, kind);
}

// ---------------------------------------------------------------------------
// Concrete double-precision operations.

/// Raw net output (softplus head). Throws NonFiniteParams.
double net_forward(const NetParams& params, double k, double t);

/// Value + input derivatives of the wrapped price ansatz at (k, t).
SurfaceJet price_jet(const PriceSurfaceModel& model, double k, double t);

/// Price value only (cheaper than the full jet).
double price_value(const PriceSurfaceModel& model, double k, double t);

/// Squared local volatility eta(k, t) >= 0.
double eta_eval(const VolSurfaceModel& model, double k, double t);

/// Scalar loss over tape-lifted parameters; gradients flow through any jet
/// entries the closure evaluates.
using TapeLoss = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Exact reverse-mode gradient of `loss` at `params`. Layout matches the
/// parameter vector. Throws NonFiniteGradient when the loss or any gradient
/// entry fails to be finite.
std::vector<double> param_gradient(const TapeLoss& loss,
                                   const NetParams& params);

// Parameter (de)serialization; bitwise round-trip, versioned header.
void write_params(std::ostream& out, const NetParams& params);
NetParams read_params(std::istream& in);
void save_params(const std::string& path, const NetParams& params);
NetParams load_params(const std::string& path);

}  // namespace volcal
