#include "volcal/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace volcal {

void MarketFrame::validate() const {
  if (!(spot > 0.0)) fail(ErrorCode::DomainError, "spot must be positive");
  if (!(k_max > 0.0)) fail(ErrorCode::DomainError, "k_max must be positive");
  if (!(t_max > 0.0)) fail(ErrorCode::DomainError, "t_max must be positive");
  if (rate < 0.0)
    fail(ErrorCode::DomainError,
         "negative rates are not supported (the arbitrage functional assumes r >= 0)");
}

bool SurfaceJet::finite() const {
  return std::isfinite(value) && std::isfinite(d_t) && std::isfinite(d_k) &&
         std::isfinite(d_kk);
}

std::optional<std::string> quote_rejection_reason(const OptionQuote& quote,
                                                  const MarketFrame& frame) {
  if (!std::isfinite(quote.price) || !std::isfinite(quote.strike) ||
      !std::isfinite(quote.maturity))
    return "InvalidField: non-finite entry";
  if (!(quote.strike > 0.0)) return "InvalidField: strike must be positive";
  if (quote.maturity < 0.0) return "InvalidField: negative maturity";
  if (quote.maturity > frame.t_max + kScaleTolerance)
    return "OutOfDomain: maturity exceeds T_max";

  double tol = kQuoteBoundTolerance * frame.spot;
  if (quote.price < -tol) return "BoundViolation: negative price";
  if (frame.kind == OptionKind::Call) {
    if (quote.price > frame.spot + tol)
      return "BoundViolation: call price above spot";
  } else {
    if (quote.price > quote.strike + tol)
      return "BoundViolation: put price above strike";
  }

  double k = std::exp(-frame.rate * quote.maturity) * quote.strike / frame.k_max;
  if (k > 1.0 + kScaleTolerance) return "OutOfDomain: strike exceeds K_max";
  return std::nullopt;
}

ScaledQuote scale_quote(const OptionQuote& quote, const MarketFrame& frame) {
  double k = std::exp(-frame.rate * quote.maturity) * quote.strike / frame.k_max;
  double t = quote.maturity / frame.t_max;
  if (t > 1.0 + kScaleTolerance || k > 1.0 + kScaleTolerance) {
    std::ostringstream msg;
    msg << "scaled quote outside the unit square: k=" << k << " t=" << t;
    fail(ErrorCode::OutOfDomain, msg.str());
  }
  return {quote.price, std::clamp(k, 0.0, 1.0), std::clamp(t, 0.0, 1.0)};
}

double unscale_volatility(double eta, const MarketFrame& frame) {
  if (eta < 0.0) fail(ErrorCode::NegativeInput, "eta must be non-negative");
  return std::sqrt(2.0 * eta / frame.t_max);
}

double scale_volatility(double sigma, const MarketFrame& frame) {
  return 0.5 * frame.t_max * sigma * sigma;
}

double initial_payoff(double k, const MarketFrame& frame) {
  double intrinsic = frame.kind == OptionKind::Call
                         ? frame.spot - frame.k_max * k
                         : frame.k_max * k - frame.spot;
  return std::max(intrinsic, 0.0);
}

double dupire_residual(const SurfaceJet& jet, double eta, double k) {
  return jet.d_t - eta * k * k * jet.d_kk;
}

double arbitrage_functional(const SurfaceJet& jet, double k,
                            const MarketFrame& frame) {
  return jet.d_t - frame.rate * frame.t_max * k * std::max(jet.d_k, 0.0);
}

std::vector<double> balance_weights(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) fail(ErrorCode::EmptyInput, "balance_weights needs values");

  double sum_sq = 0.0;
  for (double v : values) sum_sq += v * v;

  // g_i = clamp(x_i, 0.1, 10) with x_i = sum(v^2) / (N v_i^2); v_i = 0 maps
  // to the upper clamp (branch, never a NaN from 0/0).
  std::vector<double> g(n);
  double sum_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double vi2 = values[i] * values[i];
    double gi;
    if (vi2 == 0.0 || sum_sq == 0.0) {
      gi = 10.0;
    } else {
      gi = std::clamp(sum_sq / (static_cast<double>(n) * vi2), 0.1, 10.0);
    }
    g[i] = gi;
    sum_g += gi;
  }

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 1.0 + static_cast<double>(n) * g[i] / sum_g;
  return w;
}

double classical_dupire_sigma(const SurfaceJet& jet_original, double strike,
                              const MarketFrame& frame) {
  double numerator =
      2.0 * jet_original.d_t + 2.0 * frame.rate * strike * jet_original.d_k;
  double denominator = strike * strike * jet_original.d_kk;
  if (denominator <= 1e-12)
    fail(ErrorCode::DegenerateDensity,
         "K^2 d2pi/dK2 is not positive; Dupire formula is singular here");
  if (numerator < 0.0)
    fail(ErrorCode::NegativeVariance,
         "negative implied variance in the Dupire formula");
  return std::sqrt(numerator / denominator);
}

}  // namespace volcal
