#include "volcal/mc.hpp"

#include <algorithm>
#include <cmath>

#include "volcal/batch.hpp"

namespace volcal {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

}  // namespace

void SimConfig::validate() const {
  if (!(dt > 0.0)) fail(ErrorCode::DomainError, "dt must be positive");
  if (horizon < dt) fail(ErrorCode::DomainError, "horizon must be >= dt");
  if (n_paths < 1) fail(ErrorCode::DomainError, "n_paths must be >= 1");
}

std::int64_t SimConfig::n_steps() const {
  return std::llround(horizon / dt);
}

double sigma_exact(double x, double t) {
  double y = (t + 0.1) * std::sqrt(std::max(x + 0.1, 0.0));
  return 0.3 + y * std::exp(-y);
}

VolatilityField exact_field(const MarketFrame& frame) {
  const double spot = frame.spot;
  VolatilityField field;
  field.tag = VolatilityField::Tag::Exact;
  field.eval = [spot](const ArrayXd& s, double time, ArrayXd& out) {
    ArrayXd y = (time + 0.1) * (s / spot + 0.1).max(0.0).sqrt();
    out = 0.3 + y * (-y).exp();
  };
  return field;
}

VolatilityField constant_field(double sigma) {
  VolatilityField field;
  field.tag = VolatilityField::Tag::Constant;
  field.eval = [sigma](const ArrayXd& s, double, ArrayXd& out) {
    out = ArrayXd::Constant(s.size(), sigma);
  };
  return field;
}

VolatilityField calibrated_field(const VolSurfaceModel& model) {
  VolatilityField field;
  field.tag = VolatilityField::Tag::Calibrated;
  field.clamped_queries = std::make_shared<std::int64_t>(0);
  auto counter = field.clamped_queries;
  const double rate = model.frame.rate;
  const double k_max = model.frame.k_max;
  const double t_max = model.frame.t_max;
  field.eval = [model, counter, rate, k_max, t_max](const ArrayXd& s,
                                                    double time, ArrayXd& out) {
    ArrayXd k = std::exp(-rate * time) / k_max * s;
    double t = time / t_max;
    std::int64_t outside = (k < 0.0).count() + (k > 1.0).count();
    if (t < 0.0 || t > 1.0) outside += s.size();
    *counter += outside;
    ArrayXd kc = k.min(1.0).max(0.0);
    ArrayXd tc = ArrayXd::Constant(s.size(), std::clamp(t, 0.0, 1.0));
    ArrayXd eta = batch::eta_values(model, kc, tc);
    out = (2.0 * eta / t_max).sqrt();
  };
  return field;
}

namespace {

PathEnsemble integrate(const VolatilityField& vol, const MarketFrame& frame,
                       const SimConfig& sim, const Eigen::MatrixXd* replay) {
  sim.validate();
  frame.validate();
  const std::int64_t n_steps = sim.n_steps();
  const std::int64_t n_paths = sim.n_paths;

  PathEnsemble ens;
  ens.times.resize(static_cast<std::size_t>(n_steps) + 1);
  for (std::int64_t i = 0; i <= n_steps; ++i)
    ens.times[static_cast<std::size_t>(i)] = static_cast<double>(i) * sim.dt;
  ens.prices.resize(n_paths, n_steps + 1);
  ens.prices.col(0).setConstant(frame.spot);
  const bool record = sim.record_increments && replay == nullptr;
  if (record) ens.increments.resize(n_paths, n_steps);
  if (replay && (replay->rows() != n_paths || replay->cols() != n_steps))
    fail(ErrorCode::DomainError, "replay increments have the wrong shape");

  rng::Key key = rng::derive_key(static_cast<std::uint64_t>(sim.seed), sim.stream);
  const double sqrt_dt = std::sqrt(sim.dt);

  ArrayXd sigma(n_paths), z(n_paths);
  for (std::int64_t step = 0; step < n_steps; ++step) {
    const double t = ens.times[static_cast<std::size_t>(step)];
    ArrayXd s = ens.prices.col(step).array();
    vol.eval(s, t, sigma);
    if (!sigma.allFinite() || (sigma < 0.0).any())
      fail(ErrorCode::VolFieldFailure,
           "volatility field returned a non-finite or negative value at t=" +
               std::to_string(t));

    if (replay) {
      z = replay->col(step).array();
    } else {
#pragma omp parallel for schedule(static)
      for (std::int64_t p = 0; p < n_paths; ++p)
        z[p] = rng::normal_at(key, static_cast<std::uint64_t>(p),
                              static_cast<std::uint64_t>(step));
    }
    if (record) ens.increments.col(step) = z.matrix();

    if (sim.scheme == SimConfig::Scheme::LogEuler) {
      ens.prices.col(step + 1).array() =
          s * ((frame.rate - 0.5 * sigma.square()) * sim.dt +
               sigma * sqrt_dt * z).exp();
    } else {
      ens.prices.col(step + 1).array() =
          s * (1.0 + frame.rate * sim.dt + sigma * sqrt_dt * z);
    }
  }
  return ens;
}

}  // namespace

PathEnsemble simulate_paths(const VolatilityField& vol, const MarketFrame& frame,
                            const SimConfig& sim) {
  return integrate(vol, frame, sim, nullptr);
}

PathEnsemble replay_paths(const VolatilityField& vol, const MarketFrame& frame,
                          const SimConfig& sim,
                          const Eigen::MatrixXd& increments) {
  return integrate(vol, frame, sim, &increments);
}

McPrice mc_price(const PathEnsemble& paths, double strike, double maturity,
                 const MarketFrame& frame) {
  if (paths.times.size() < 2) fail(ErrorCode::DomainError, "empty ensemble");
  const double dt = paths.times[1] - paths.times[0];
  auto idx = static_cast<std::int64_t>(std::llround(maturity / dt));
  if (idx < 0 || idx >= static_cast<std::int64_t>(paths.times.size()) ||
      std::abs(maturity - paths.times[static_cast<std::size_t>(idx)]) >
          0.5 * dt + 1e-12)
    fail(ErrorCode::MaturityOutOfRange,
         "maturity " + std::to_string(maturity) + " not on the monitoring grid");

  const double t_snap = paths.times[static_cast<std::size_t>(idx)];
  const double discount = std::exp(-frame.rate * t_snap);
  ArrayXd payoff;
  if (frame.kind == OptionKind::Call)
    payoff = (paths.prices.col(idx).array() - strike).max(0.0);
  else
    payoff = (strike - paths.prices.col(idx).array()).max(0.0);
  const double n = static_cast<double>(payoff.size());
  double mean = payoff.mean();
  double var = n > 1 ? (payoff - mean).square().sum() / (n - 1.0) : 0.0;
  return {discount * mean, discount * std::sqrt(var / n), t_snap};
}

BsDerivatives bs_closed_form(double s0, double strike, double maturity,
                             double rate, double sigma, OptionKind kind) {
  if (!(s0 > 0.0) || !(strike > 0.0))
    fail(ErrorCode::DomainError, "bs_closed_form: S0 and K must be positive");
  if (!(maturity > 0.0) || !(sigma > 0.0))
    fail(ErrorCode::DomainError, "bs_closed_form: T and sigma must be positive");

  const double sq_t = std::sqrt(maturity);
  const double d1 =
      (std::log(s0 / strike) + (rate + 0.5 * sigma * sigma) * maturity) /
      (sigma * sq_t);
  const double d2 = d1 - sigma * sq_t;
  const double disc = std::exp(-rate * maturity);

  BsDerivatives out;
  // d2 pi/dK2 = e^{-rT} phi(d2) / (K sigma sqrt(T)), same for calls and puts.
  out.d_strike2 = disc * norm_pdf(d2) / (strike * sigma * sq_t);
  const double theta_common = s0 * norm_pdf(d1) * sigma / (2.0 * sq_t);
  if (kind == OptionKind::Call) {
    out.price = s0 * norm_cdf(d1) - strike * disc * norm_cdf(d2);
    out.d_strike = -disc * norm_cdf(d2);
    out.d_maturity = theta_common + rate * strike * disc * norm_cdf(d2);
  } else {
    out.price = strike * disc * norm_cdf(-d2) - s0 * norm_cdf(-d1);
    out.d_strike = disc * norm_cdf(-d2);
    out.d_maturity = theta_common - rate * strike * disc * norm_cdf(-d2);
  }
  return out;
}

ArrayXd GridSpec::strikes() const {
  return ArrayXd::LinSpaced(n_strikes, strike_lo, strike_hi);
}

ArrayXd GridSpec::maturities() const {
  return ArrayXd::LinSpaced(n_maturities, maturity_lo, maturity_hi);
}

SyntheticDataset generate_synthetic_dataset(const GridSpec& grid,
                                            const VolatilityField& vol,
                                            const MarketFrame& frame,
                                            const SimConfig& sim) {
  if (grid.n_maturities < 1 || grid.n_strikes < 1)
    fail(ErrorCode::DomainError, "grid must have at least one node per axis");
  if (grid.maturity_hi > sim.horizon + 0.5 * sim.dt)
    fail(ErrorCode::MaturityOutOfRange, "grid maturities exceed the horizon");

  PathEnsemble paths = simulate_paths(vol, frame, sim);
  ArrayXd strikes = grid.strikes();
  ArrayXd maturities = grid.maturities();

  SyntheticDataset data;
  data.quotes.reserve(static_cast<std::size_t>(grid.n_maturities * grid.n_strikes));
  for (int ti = 0; ti < grid.n_maturities; ++ti) {
    for (int ki = 0; ki < grid.n_strikes; ++ki) {
      McPrice priced = mc_price(paths, strikes[ki], maturities[ti], frame);
      data.quotes.push_back({priced.price, strikes[ki], priced.snapped_maturity});
      data.std_errors.push_back(priced.std_error);
      data.requested_maturities.push_back(maturities[ti]);
    }
  }
  return data;
}

RepriceReport reprice_quotes(const VolSurfaceModel& model,
                             std::span<const OptionQuote> quotes,
                             const MarketFrame& frame, const SimConfig& sim) {
  if (quotes.empty()) fail(ErrorCode::EmptyInput, "reprice: no quotes");
  VolatilityField field = calibrated_field(model);
  PathEnsemble paths = simulate_paths(field, frame, sim);

  RepriceReport report;
  report.prices.reserve(quotes.size());
  double sq_sum = 0.0;
  for (const OptionQuote& q : quotes) {
    McPrice priced = mc_price(paths, q.strike, q.maturity, frame);
    sq_sum += (priced.price - q.price) * (priced.price - q.price);
    report.prices.push_back(priced);
  }
  report.rmse = std::sqrt(sq_sum / static_cast<double>(quotes.size()));
  report.clamped_queries = *field.clamped_queries;
  return report;
}

double reprice_rmse(const VolSurfaceModel& model,
                    std::span<const OptionQuote> quotes,
                    const MarketFrame& frame, const SimConfig& sim) {
  return reprice_quotes(model, quotes, frame, sim).rmse;
}

namespace {

// Scaled coordinates for every (K, T) node, maturity-major flattening.
void scaled_grid(const MarketFrame& frame, const ArrayXd& strikes,
                 const ArrayXd& maturities, ArrayXd& k, ArrayXd& t) {
  const Eigen::Index nk = strikes.size(), nt = maturities.size();
  k.resize(nk * nt);
  t.resize(nk * nt);
  for (Eigen::Index ti = 0; ti < nt; ++ti) {
    double disc = std::exp(-frame.rate * maturities[ti]);
    for (Eigen::Index ki = 0; ki < nk; ++ki) {
      k[ti * nk + ki] = std::clamp(disc * strikes[ki] / frame.k_max, 0.0, 1.0);
      t[ti * nk + ki] = std::clamp(maturities[ti] / frame.t_max, 0.0, 1.0);
    }
  }
}

}  // namespace

ArrayXXd vol_surface_grid(const VolSurfaceModel& model, const ArrayXd& strikes,
                          const ArrayXd& maturities) {
  ArrayXd k, t;
  scaled_grid(model.frame, strikes, maturities, k, t);
  ArrayXd eta = batch::eta_values(model, k, t);
  ArrayXd sigma = (2.0 * eta / model.frame.t_max).sqrt();
  return Eigen::Map<const ArrayXXd>(sigma.data(), strikes.size(),
                                    maturities.size())
      .transpose();
}

ArrayXXd price_surface_grid(const PriceSurfaceModel& model,
                            const ArrayXd& strikes, const ArrayXd& maturities) {
  ArrayXd k, t;
  scaled_grid(model.frame, strikes, maturities, k, t);
  ArrayXd pi = batch::price_values(model, k, t);
  return Eigen::Map<const ArrayXXd>(pi.data(), strikes.size(), maturities.size())
      .transpose();
}

ArrayXXd exact_vol_grid(const MarketFrame& frame, const ArrayXd& strikes,
                        const ArrayXd& maturities) {
  ArrayXXd out(maturities.size(), strikes.size());
  for (Eigen::Index ti = 0; ti < maturities.size(); ++ti)
    for (Eigen::Index ki = 0; ki < strikes.size(); ++ki)
      out(ti, ki) = sigma_exact(strikes[ki] / frame.spot, maturities[ti]);
  return out;
}

ArrayXXd mc_price_grid(const PathEnsemble& paths, const ArrayXd& strikes,
                       const ArrayXd& maturities, const MarketFrame& frame) {
  ArrayXXd out(maturities.size(), strikes.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index ti = 0; ti < maturities.size(); ++ti)
    for (Eigen::Index ki = 0; ki < strikes.size(); ++ki)
      out(ti, ki) = mc_price(paths, strikes[ki], maturities[ti], frame).price;
  return out;
}

double surface_rmse(const ArrayXXd& a, const ArrayXXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorCode::DomainError, "surface_rmse: shape mismatch");
  return std::sqrt((a - b).square().mean());
}

}  // namespace volcal
