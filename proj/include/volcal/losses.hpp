#pragma once

// Collocation sampling and the four training losses:
//   L_fit  weighted MSE against quotes,
//   L_ini  weighted MSE against the t=0 payoff on M1 sampled strikes,
//   L_arb  penalty on negative arbitrage-functional values on M2 points,
//   L_dup  weighted squared Dupire residual on the same M2 points,
// combined as L_pi = L_fit + li L_ini + la L_arb + ld L_dup.
//
// Every weight w(.) is detached: it scales residuals as a constant and never
// contributes parameter gradients.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "volcal/batch.hpp"
#include "volcal/core.hpp"
#include "volcal/net.hpp"
#include "volcal/rng.hpp"

namespace volcal {

using Eigen::ArrayXd;
using Eigen::VectorXd;

struct CollocationBatch {
  ArrayXd initial_k;            // M1 strikes in [0,1]
  ArrayXd domain_k, domain_t;   // M2 points in [0,1]^2
};

/// Fresh i.i.d. uniform draws; advances the stream.
CollocationBatch sample_batch(int m1, int m2, rng::CounterStream& stream);

struct LossCoefficients {
  double lambda_ini = 1.0;
  double lambda_arb = 1.0;
  double lambda_dup = 1.0;
};

struct LossBreakdown {
  double fit = 0.0, ini = 0.0, arb = 0.0, dup = 0.0, total = 0.0;
};

LossBreakdown total_loss(double fit, double ini, double arb, double dup,
                         const LossCoefficients& c);

// Spec-level loss values (no gradients).
double loss_fit(const PriceSurfaceModel& model,
                std::span<const ScaledQuote> quotes);
double loss_ini(const PriceSurfaceModel& model, const CollocationBatch& batch,
                const MarketFrame& frame);
double loss_arb(const PriceSurfaceModel& model, const CollocationBatch& batch,
                const MarketFrame& frame);
double loss_dup(const PriceSurfaceModel& price, const VolSurfaceModel& vol,
                const CollocationBatch& batch);

struct LossEvalOptions {
  int chunk = 2048;            // domain points per evaluation chunk
  bool price_gradient = false; // accumulate d L_pi / d theta_price
  bool vol_gradient = false;   // accumulate d L_dup / d theta_eta (unscaled)
};

struct LossEvaluation {
  LossBreakdown losses;
  VectorXd price_grad;
  VectorXd vol_grad;
};

/// One full loss evaluation over a batch, with optional analytic gradients.
/// The same batch serves L_arb and L_dup (single M2 draw per iteration).
LossEvaluation evaluate_losses(const PriceSurfaceModel& price,
                               const VolSurfaceModel& vol,
                               std::span<const ScaledQuote> quotes,
                               const CollocationBatch& batch,
                               const LossCoefficients& coeffs,
                               const LossEvalOptions& options);

}  // namespace volcal
