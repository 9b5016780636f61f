#pragma once

// Coordinate scaling, payoffs, the scaled Dupire residual, the arbitrage
// functional, the loss-balancing weights and the classical Dupire extractor.
// Everything here is pure and immutable; safe to call from any thread.
//
// Scaled coordinates: k = e^{-rT} K / K_max, t = T / T_max map the surface
// into the unit square; eta(k,t) = (T_max/2) sigma^2 is the squared local
// volatility in those coordinates.

#include <optional>
#include <string>
#include <vector>

#include "volcal/errors.hpp"

namespace volcal {

enum class OptionKind { Call, Put };

inline const char* option_kind_name(OptionKind k) {
  return k == OptionKind::Call ? "call" : "put";
}

/// Global market constants for one calibration problem.
struct MarketFrame {
  double spot = 0.0;   // S0
  double rate = 0.0;   // continuously compounded, r >= 0
  double k_max = 0.0;  // strike scale K_max
  double t_max = 0.0;  // maturity scale T_max, years
  OptionKind kind = OptionKind::Call;

  void validate() const;
};

/// A quoted option: price pi at (strike K, maturity T).
struct OptionQuote {
  double price = 0.0;
  double strike = 0.0;
  double maturity = 0.0;
};

/// A quote mapped into the unit square; price passes through unchanged.
struct ScaledQuote {
  double price = 0.0;
  double k = 0.0;
  double t = 0.0;
};

/// Value and input derivatives of a price surface at one point. Coordinates
/// are whatever the producer used (scaled (k,t) or original (K,T)).
struct SurfaceJet {
  double value = 0.0;
  double d_t = 0.0;
  double d_k = 0.0;
  double d_kk = 0.0;

  bool finite() const;
};

/// Bound-check tolerance for quote ingestion, relative to spot.
inline constexpr double kQuoteBoundTolerance = 1e-9;
/// Slack allowed on k,t <= 1 after scaling before OutOfDomain.
inline constexpr double kScaleTolerance = 1e-9;

/// Validates one quote against its invariants and the price bounds
/// (0 <= call <= S0, 0 <= put <= K, within 1e-9*spot). Returns a rejection
/// reason, or nullopt when the quote is acceptable.
std::optional<std::string> quote_rejection_reason(const OptionQuote& quote,
                                                  const MarketFrame& frame);

/// k = e^{-rT} K / K_max, t = T / T_max. Results are clamped into [0,1] when
/// within kScaleTolerance; beyond that throws OutOfDomain.
ScaledQuote scale_quote(const OptionQuote& quote, const MarketFrame& frame);

/// sigma = sqrt(2 eta / T_max); inverse of eta = (T_max/2) sigma^2.
double unscale_volatility(double eta, const MarketFrame& frame);

/// eta = (T_max/2) sigma^2, the forward map inverted by unscale_volatility.
double scale_volatility(double sigma, const MarketFrame& frame);

/// Initial condition at t = 0: (S0 - K_max k)^+ for calls,
/// (K_max k - S0)^+ for puts.
double initial_payoff(double k, const MarketFrame& frame);

/// Scaled Dupire residual f_dup = d_t - eta k^2 d_kk.
double dupire_residual(const SurfaceJet& jet, double eta, double k);

/// Arbitrage functional f_arb = d_t - r T_max k (d_k)^+; non-negative means
/// no calendar/butterfly arbitrage at the point.
double arbitrage_functional(const SurfaceJet& jet, double k,
                            const MarketFrame& frame);

/// Loss-balancing weights w_i = 1 + N g_i / sum(g) with
/// g_i = clamp((sum_j v_j^2) / (N v_i^2), 0.1, 10) and v_i = 0 mapping to the
/// upper clamp. mean(w) = 2 identically. The caller must treat the result as
/// detached constants: it never contributes parameter gradients.
std::vector<double> balance_weights(const std::vector<double>& values);

/// Classical Dupire extractor in original coordinates:
/// sigma(K,T) = sqrt((2 d_T + 2 r K d_K) / (K^2 d_KK)). Diagnostic baseline
/// only; throws DegenerateDensity / NegativeVariance instead of clamping.
double classical_dupire_sigma(const SurfaceJet& jet_original, double strike,
                              const MarketFrame& frame);

}  // namespace volcal
