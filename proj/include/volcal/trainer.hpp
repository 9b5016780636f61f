#pragma once

// The alternating optimization loop: per iteration, draw one collocation
// batch, evaluate the four losses, step the price parameters on dL_pi and the
// volatility parameters on dL_dup (same batch), under the stepped learning
// rate lr0 / decay^floor(iter/interval). With lambda_dup = 0 the volatility
// step is skipped entirely (the one-way ablation arm); L_dup is still
// evaluated for the trace.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "volcal/core.hpp"
#include "volcal/losses.hpp"
#include "volcal/net.hpp"

namespace volcal {

struct TrainConfig {
  int m1 = 128;
  int m2 = 128 * 128;
  double lambda_ini = 1.0;
  double lambda_arb = 1.0;
  double lambda_dup = 1.0;
  std::int64_t max_iters = 30000;
  double lr0 = 1e-3;
  double lr_decay = 1.1;
  std::int64_t lr_interval = 2000;
  std::int64_t seed = 0;
  std::int64_t checkpoint_every = 1000;
  NetConfig net;
  int chunk = 2048;
  bool early_stop = true;
  std::int64_t early_stop_window = 2000;
  double early_stop_rel = 1e-8;

  void validate() const;
  /// Canonical key=value rendering; hashed into provenance records.
  std::string canonical_text() const;
  std::uint64_t hash() const;
};

/// lr0 / decay^floor(iter / interval); non-increasing in iter.
double lr_at(std::int64_t iter, const TrainConfig& config);

struct TraceRow {
  std::int64_t iter = 0;
  double lr = 0.0;
  double fit = 0.0, ini = 0.0, arb = 0.0, dup = 0.0, total = 0.0;
  double wall_ms = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
};

struct AdamState {
  Eigen::VectorXd m, v;
  std::int64_t t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  static AdamState zero(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  }
  bool operator==(const AdamState& o) const {
    return t == o.t && m == o.m && v == o.v;
  }
};

/// One bias-corrected adaptive-moment update, in place.
void optimizer_step(ParamVector& params, const Eigen::VectorXd& grad,
                    AdamState& state, double lr);

struct TrainResult {
  PriceSurfaceModel price;
  VolSurfaceModel vol;
  TrainTrace trace;
  AdamState adam_price, adam_vol;
  std::uint64_t sampler_counter = 0;
  double lr_multiplier = 1.0;  // halved once after a rollback
  std::int64_t iterations = 0;
  bool early_stopped = false;
  int rollbacks = 0;
};

/// Runs Algorithm-1 style training to max_iters (or early stop). Throws
/// DivergedTraining when a non-finite loss recurs after the one rollback.
TrainResult train(const std::vector<ScaledQuote>& quotes,
                  const MarketFrame& frame, const TrainConfig& config);

/// Resumes from a loaded checkpoint with the same config/frame.
struct Checkpoint {
  std::uint32_t version = 1;
  TrainConfig config;
  MarketFrame frame;
  std::int64_t iteration = 0;
  NetParams price_params, vol_params;
  AdamState adam_price, adam_vol;
  std::uint64_t sampler_counter = 0;
  double lr_multiplier = 1.0;
  std::uint64_t config_hash = 0;
};

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config,
                           const MarketFrame& frame);

TrainResult train_from(const Checkpoint& start,
                       const std::vector<ScaledQuote>& quotes);

void checkpoint_save(const std::string& path, const Checkpoint& checkpoint);
Checkpoint checkpoint_load(const std::string& path);
/// Load and require an architecture match; VersionMismatch otherwise.
Checkpoint checkpoint_load(const std::string& path, const NetConfig& expected);

}  // namespace volcal
