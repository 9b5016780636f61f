#pragma once

// Monte Carlo machinery: local-volatility SDE simulation (log-Euler by
// default, so prices stay positive), option pricing by discounted expectation,
// synthetic dataset generation under the closed-form test volatility, the
// Black-Scholes oracle, and repricing evaluation under a calibrated surface.
//
// All randomness is counter-based: path p, step i draws normal_at(key, p, i),
// so ensembles are reproducible and thread-count independent, and a recorded
// increment matrix can be replayed against a different volatility field.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "volcal/core.hpp"
#include "volcal/net.hpp"
#include "volcal/rng.hpp"

namespace volcal {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;

struct SimConfig {
  std::int64_t n_paths = 100000;
  double dt = 0.01;
  double horizon = 1.5;  // years
  std::int64_t seed = 0;
  enum class Scheme { LogEuler, Euler };
  Scheme scheme = Scheme::LogEuler;
  bool record_increments = false;
  rng::StreamTag stream = rng::StreamTag::PathSimulation;

  void validate() const;
  std::int64_t n_steps() const;
};

struct PathEnsemble {
  std::vector<double> times;   // monitoring grid, size n_steps + 1
  Eigen::MatrixXd prices;      // n_paths x (n_steps + 1)
  Eigen::MatrixXd increments;  // n_paths x n_steps when recorded, else empty
};

/// A queriable volatility surface sigma(S, t) with batched evaluation.
struct VolatilityField {
  enum class Tag { Exact, Calibrated, Constant, Custom };
  Tag tag = Tag::Custom;
  std::function<void(const ArrayXd& prices, double time, ArrayXd& sigma)> eval;
  /// Out-of-square queries clamped by a calibrated field (see
  /// calibrated_field); shared so field copies keep one tally.
  std::shared_ptr<std::int64_t> clamped_queries;
};

/// Closed-form test volatility: sigma = 0.3 + y e^{-y},
/// y = (t + 0.1) sqrt(x + 0.1), x the spot-normalized price. Values lie in
/// (0.3, 0.3 + e^{-1}].
double sigma_exact(double x, double t);

VolatilityField exact_field(const MarketFrame& frame);
VolatilityField constant_field(double sigma);

/// Wraps a calibrated eta surface: the Monte Carlo state (S, t) maps into
/// scaled coordinates (k = e^{-rt} S / K_max, t / T_max), clamped to the unit
/// square with a tally, then sigma = sqrt(2 eta / T_max).
VolatilityField calibrated_field(const VolSurfaceModel& model);

PathEnsemble simulate_paths(const VolatilityField& vol, const MarketFrame& frame,
                            const SimConfig& sim);

/// Re-integrates with the provided normal increments instead of fresh draws.
PathEnsemble replay_paths(const VolatilityField& vol, const MarketFrame& frame,
                          const SimConfig& sim,
                          const Eigen::MatrixXd& increments);

struct McPrice {
  double price = 0.0;
  double std_error = 0.0;
  double snapped_maturity = 0.0;
};

/// Discounted sample mean of the payoff at the monitoring time nearest to
/// `maturity` (offset at most dt/2, else MaturityOutOfRange).
McPrice mc_price(const PathEnsemble& paths, double strike, double maturity,
                 const MarketFrame& frame);

struct BsDerivatives {
  double price = 0.0;
  double d_maturity = 0.0;  // d price / d T
  double d_strike = 0.0;    // d price / d K
  double d_strike2 = 0.0;   // d^2 price / d K^2
};

BsDerivatives bs_closed_form(double s0, double strike, double maturity,
                             double rate, double sigma, OptionKind kind);

struct GridSpec {
  int n_maturities = 10;
  int n_strikes = 20;
  double strike_lo = 500.0, strike_hi = 3000.0;
  double maturity_lo = 0.3, maturity_hi = 1.5;

  ArrayXd strikes() const;
  ArrayXd maturities() const;
};

struct SyntheticDataset {
  std::vector<OptionQuote> quotes;  // maturity-major grid order
  std::vector<double> std_errors;
  std::vector<double> requested_maturities;  // pre-snapping, same order
};

/// One shared path ensemble prices every grid node. Quotes carry the snapped
/// maturity so each price matches its stated maturity exactly.
SyntheticDataset generate_synthetic_dataset(const GridSpec& grid,
                                            const VolatilityField& vol,
                                            const MarketFrame& frame,
                                            const SimConfig& sim);

struct RepriceReport {
  double rmse = 0.0;
  std::vector<McPrice> prices;
  std::int64_t clamped_queries = 0;
};

/// Simulates under the calibrated field and reprices the quote nodes.
RepriceReport reprice_quotes(const VolSurfaceModel& model,
                             std::span<const OptionQuote> quotes,
                             const MarketFrame& frame, const SimConfig& sim);

double reprice_rmse(const VolSurfaceModel& model,
                    std::span<const OptionQuote> quotes,
                    const MarketFrame& frame, const SimConfig& sim);

// --- surface grids (original coordinates) -----------------------------------

/// sigma_theta(K, T) on the grid (rows: maturities, cols: strikes).
ArrayXXd vol_surface_grid(const VolSurfaceModel& model, const ArrayXd& strikes,
                          const ArrayXd& maturities);

/// pi_theta(K, T) on the grid.
ArrayXXd price_surface_grid(const PriceSurfaceModel& model,
                            const ArrayXd& strikes, const ArrayXd& maturities);

/// Exact sigma(K/S0, T) on the grid.
ArrayXXd exact_vol_grid(const MarketFrame& frame, const ArrayXd& strikes,
                        const ArrayXd& maturities);

/// Monte Carlo reference prices on the grid from one ensemble.
ArrayXXd mc_price_grid(const PathEnsemble& paths, const ArrayXd& strikes,
                       const ArrayXd& maturities, const MarketFrame& frame);

/// Root-mean-square of pointwise differences.
double surface_rmse(const ArrayXXd& a, const ArrayXXd& b);

}  // namespace volcal
