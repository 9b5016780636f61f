#include <doctest.h>

#include <cmath>

#include "volcal/losses.hpp"
#include "volcal/mc.hpp"
#include "volcal/trainer.hpp"

using namespace volcal;

namespace {

MarketFrame synthetic_frame(OptionKind kind = OptionKind::Call) {
  return {1000.0, 0.04, 3000.0, 1.5, kind};
}

}  // namespace

TEST_CASE("sigma_exact worked examples and bounds") {
  CHECK(sigma_exact(0.9, 0.0) == doctest::Approx(0.390483741803596).epsilon(1e-12));
  // y = 1 attains the maximum 0.3 + e^{-1}
  CHECK(sigma_exact(0.9, 0.9) == doctest::Approx(0.3 + std::exp(-1.0)).epsilon(1e-15));
  rng::CounterStream s(1, rng::StreamTag::Test);
  for (int i = 0; i < 1000; ++i) {
    double v = sigma_exact(s.next_uniform(0, 5), s.next_uniform(0, 3));
    CHECK(v > 0.3);
    CHECK(v <= 0.3 + std::exp(-1.0) + 1e-15);
  }
}

TEST_CASE("degenerate SDE: zero volatility") {
  MarketFrame frame = synthetic_frame();
  frame.rate = 0.0;
  SimConfig sim;
  sim.n_paths = 64;
  sim.horizon = 1.0;
  PathEnsemble paths = simulate_paths(constant_field(0.0), frame, sim);
  CHECK((paths.prices.array() == 1000.0).all());

  frame.rate = 0.04;
  PathEnsemble grown = simulate_paths(constant_field(0.0), frame, sim);
  // LogEuler integrates deterministic growth exactly.
  CHECK(grown.prices.col(100).array().isApproxToConstant(
      1000.0 * std::exp(0.04), 1e-12));
}

TEST_CASE("LogEuler keeps prices positive; martingale property holds") {
  MarketFrame frame = synthetic_frame();
  frame.rate = 0.0;
  SimConfig sim;
  sim.n_paths = 100000;
  sim.horizon = 1.0;
  sim.seed = 9;
  PathEnsemble paths = simulate_paths(constant_field(0.3), frame, sim);
  CHECK((paths.prices.array() > 0.0).all());

  ArrayXd ratio = paths.prices.col(100).array() / frame.spot;
  double mean = ratio.mean();
  double se = std::sqrt((ratio - mean).square().sum() /
                        (ratio.size() * (ratio.size() - 1.0)));
  CHECK(std::abs(mean - 1.0) <= 4.0 * se);
}

TEST_CASE("mc_price: degenerate strike, BS agreement, parity, snapping") {
  MarketFrame frame{100.0, 0.0, 300.0, 1.5, OptionKind::Call};
  SimConfig sim;
  sim.n_paths = 100000;
  sim.horizon = 1.0;
  sim.seed = 4;
  PathEnsemble paths = simulate_paths(constant_field(0.3), frame, sim);

  // K = 0: discounted mean of S_T.
  McPrice k0 = mc_price(paths, 0.0, 1.0, frame);
  CHECK(k0.price == doctest::Approx(paths.prices.col(100).mean()).epsilon(1e-14));

  McPrice atm = mc_price(paths, 100.0, 1.0, frame);
  double bs = bs_closed_form(100.0, 100.0, 1.0, 0.0, 0.3, OptionKind::Call).price;
  CHECK(bs == doctest::Approx(11.9235384740485).epsilon(1e-10));
  CHECK(std::abs(atm.price - bs) <= 3.0 * atm.std_error);

  // Shared-path put-call parity.
  MarketFrame put_frame = frame;
  put_frame.kind = OptionKind::Put;
  McPrice put = mc_price(paths, 100.0, 1.0, put_frame);
  double fwd_se = k0.std_error;
  CHECK(std::abs((atm.price - put.price) - (100.0 - 100.0)) <=
        3.0 * std::sqrt(fwd_se * fwd_se));

  // Maturity snapping to the monitoring grid.
  McPrice snapped = mc_price(paths, 100.0, 0.433333333, frame);
  CHECK(snapped.snapped_maturity == doctest::Approx(0.43).epsilon(1e-12));
  CHECK_THROWS_AS(mc_price(paths, 100.0, 1.2, frame), Error);
  CHECK_THROWS_AS(mc_price(paths, 100.0, -0.1, frame), Error);
}

TEST_CASE("standard error scales like 1/sqrt(n_paths)") {
  MarketFrame frame{100.0, 0.0, 300.0, 1.5, OptionKind::Call};
  SimConfig small;
  small.n_paths = 20000;
  small.horizon = 0.5;
  small.seed = 12;
  SimConfig big = small;
  big.n_paths = 80000;
  double se_small =
      mc_price(simulate_paths(constant_field(0.3), frame, small), 100.0, 0.5, frame)
          .std_error;
  double se_big =
      mc_price(simulate_paths(constant_field(0.3), frame, big), 100.0, 0.5, frame)
          .std_error;
  double ratio = se_small / se_big;
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("bs_closed_form: limits, convexity, derivative consistency") {
  // Deep in-the-money limit: price -> S0 - K e^{-rT}.
  BsDerivatives deep =
      bs_closed_form(100.0, 1e-6, 1.0, 0.04, 0.3, OptionKind::Call);
  CHECK(std::abs(deep.price - (100.0 - 1e-6 * std::exp(-0.04))) <= 1e-9 * 100.0);

  // Lognormal density positivity (down to double underflow far from the money).
  rng::CounterStream sx(7, rng::StreamTag::Test);
  for (int i = 0; i < 200; ++i) {
    double s0 = sx.next_uniform(50, 2000);
    BsDerivatives d = bs_closed_form(s0, sx.next_uniform(0.4 * s0, 2.5 * s0),
                                     sx.next_uniform(0.1, 2.0),
                                     sx.next_uniform(0.0, 0.08),
                                     sx.next_uniform(0.1, 0.8),
                                     i % 2 == 0 ? OptionKind::Call : OptionKind::Put);
    CHECK(d.d_strike2 >= 0.0);
  }

  // Derivative/FD agreement on a well-conditioned region (Richardson-refined
  // central differences; far-from-the-money gamma underflows and carries no
  // FD signal).
  rng::CounterStream s(3, rng::StreamTag::Test);
  for (int i = 0; i < 200; ++i) {
    double s0 = s.next_uniform(50, 2000);
    double k = s.next_uniform(0.7 * s0, 1.4 * s0);
    double t = s.next_uniform(0.3, 2.0);
    double r = s.next_uniform(0.0, 0.08);
    double sig = s.next_uniform(0.15, 0.6);
    OptionKind kind = i % 2 == 0 ? OptionKind::Call : OptionKind::Put;
    BsDerivatives d = bs_closed_form(s0, k, t, r, sig, kind);
    CHECK(d.d_strike2 > 0.0);

    auto price_k = [&](double kk) { return bs_closed_form(s0, kk, t, r, sig, kind).price; };
    auto price_t = [&](double tt) { return bs_closed_form(s0, k, tt, r, sig, kind).price; };
    auto rich1 = [](auto&& f, double x, double h) {
      auto d1 = [&](double step) { return (f(x + step) - f(x - step)) / (2 * step); };
      return (4.0 * d1(h / 2) - d1(h)) / 3.0;
    };
    auto rich2 = [](auto&& f, double x, double h) {
      auto d2 = [&](double step) {
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
      };
      return (4.0 * d2(h / 2) - d2(h)) / 3.0;
    };
    double fd_k = rich1(price_k, k, 1e-4 * k);
    double fd_t = rich1(price_t, t, 1e-4 * std::max(t, 0.5));
    double fd_kk = rich2(price_k, k, 1e-3 * k);
    CHECK(std::abs(fd_k - d.d_strike) <= 1e-7 * std::max(1e-3, std::abs(d.d_strike)));
    CHECK(std::abs(fd_t - d.d_maturity) <= 1e-7 * std::max(1e-3, std::abs(d.d_maturity)));
    CHECK(std::abs(fd_kk - d.d_strike2) <= 1e-7 * std::abs(d.d_strike2) + 1e-11 * s0);
  }
}

TEST_CASE("classical_dupire_sigma recovers the BS volatility from its jets") {
  MarketFrame frame = synthetic_frame();
  rng::CounterStream s(5, rng::StreamTag::Test);
  for (int i = 0; i < 100; ++i) {
    double k = s.next_uniform(600, 2900);
    double t = s.next_uniform(0.1, 1.4);
    BsDerivatives d = bs_closed_form(1000.0, k, t, 0.04, 0.3, OptionKind::Call);
    SurfaceJet jet{d.price, d.d_maturity, d.d_strike, d.d_strike2};
    CHECK(std::abs(classical_dupire_sigma(jet, k, frame) - 0.3) <= 1e-8);
  }
}

TEST_CASE("synthetic dataset generation: shape, monotonicity, snapping") {
  MarketFrame frame = synthetic_frame();
  SimConfig sim;
  sim.n_paths = 20000;
  sim.seed = 21;
  sim.stream = rng::StreamTag::DatasetGeneration;

  GridSpec grid;  // 10 x 20 default
  SyntheticDataset data =
      generate_synthetic_dataset(grid, exact_field(frame), frame, sim);
  CHECK(data.quotes.size() == 200);

  GridSpec scarce{3, 6};
  SyntheticDataset small =
      generate_synthetic_dataset(scarce, exact_field(frame), frame, sim);
  CHECK(small.quotes.size() == 18);

  // Shared paths make call prices exactly non-increasing along strikes.
  for (int ti = 0; ti < grid.n_maturities; ++ti)
    for (int ki = 0; ki + 1 < grid.n_strikes; ++ki) {
      const auto& a = data.quotes[static_cast<std::size_t>(ti * 20 + ki)];
      const auto& b = data.quotes[static_cast<std::size_t>(ti * 20 + ki + 1)];
      CHECK(a.price >= b.price);
    }

  // Maturities carry grid-snapped values; offsets recorded via the requested list.
  for (std::size_t i = 0; i < data.quotes.size(); ++i) {
    double snapped = data.quotes[i].maturity;
    CHECK(std::abs(snapped - data.requested_maturities[i]) <= 0.5 * sim.dt + 1e-12);
    CHECK(std::abs(snapped / sim.dt - std::round(snapped / sim.dt)) < 1e-9);
  }

  // All prices respect the call bound.
  for (const auto& q : data.quotes) {
    CHECK(q.price >= 0.0);
    CHECK(q.price <= frame.spot);
  }
}

TEST_CASE("recorded increments replay to the identical ensemble") {
  MarketFrame frame = synthetic_frame();
  SimConfig sim;
  sim.n_paths = 500;
  sim.horizon = 0.5;
  sim.seed = 8;
  sim.record_increments = true;
  PathEnsemble a = simulate_paths(exact_field(frame), frame, sim);
  PathEnsemble b = replay_paths(exact_field(frame), frame, sim, a.increments);
  CHECK(a.prices == b.prices);

  // The same Brownian draw can drive a different field (Figure-style probe).
  PathEnsemble c = replay_paths(constant_field(0.3), frame, sim, a.increments);
  CHECK(c.prices.rows() == a.prices.rows());
  CHECK(c.prices != a.prices);
}

TEST_CASE("repricing under an exactly-zero volatility model is exact") {
  MarketFrame frame = synthetic_frame();
  frame.rate = 0.0;
  NetConfig config{1, 8};
  NetParams params = init_params(config, 1);
  std::fill(params.values.begin(), params.values.end(), 0.0);
  params.values.back() = -800.0;  // head bias: softplus underflows to exactly 0
  VolSurfaceModel model = make_vol_model(params, frame);

  std::vector<OptionQuote> quotes;
  for (double strike : {500.0, 900.0, 1200.0})
    quotes.push_back({std::max(frame.spot - strike, 0.0), strike, 1.0});

  SimConfig sim;
  sim.n_paths = 200;
  sim.horizon = 1.0;
  RepriceReport report = reprice_quotes(model, quotes, frame, sim);
  CHECK(report.rmse <= 1e-12);
}

TEST_CASE("self-repricing: an eta net fitted to the exact field reprices "
          "its own quotes to the noise floor") {
  MarketFrame frame = synthetic_frame();
  NetConfig config{2, 16};
  NetParams params = init_params(config, 40);
  ParamLayout layout = ParamLayout::make(config);
  VolSurfaceModel model = make_vol_model(params, frame);

  // Supervised fit of eta(k,t) to the exact surface on random collocation
  // points (gradient through the batched value path + adaptive moments).
  rng::CounterStream s(41, rng::StreamTag::Test);
  AdamState adam = AdamState::zero(layout.total);
  const int batch_size = 512;
  const int fit_iters = 12000;
  for (int it = 0; it < fit_iters; ++it) {
    ArrayXd k(batch_size), t(batch_size), target(batch_size);
    for (int i = 0; i < batch_size; ++i) {
      k[i] = s.next_uniform();
      t[i] = s.next_uniform();
      // Invert the quote-side mapping: the MC field queries eta at
      // k = e^{-r tau} S / K_max with tau the real time; match that here.
      double tau = t[i] * frame.t_max;
      double spot_equiv = k[i] * frame.k_max * std::exp(frame.rate * tau);
      double sig = sigma_exact(spot_equiv / frame.spot, tau);
      target[i] = scale_volatility(sig, frame);
    }
    batch::NetWorkspace ws;
    ArrayXd eta = batch::eta_forward(model, k, t, ws);
    ArrayXd adj = 2.0 / batch_size * (eta - target);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.total);
    batch::eta_backward(model, ws, adj, grad);
    double lr = 3e-3 / (1.0 + 4.0 * it / fit_iters);
    optimizer_step(model.params.values, grad, adam, lr);
  }

  // Verify the supervised fit reached the oracle-injection quality bar.
  double rms = 0.0;
  int count = 0;
  for (double k = 0.05; k <= 1.0; k += 0.05)
    for (double t = 0.05; t <= 1.0; t += 0.05) {
      double tau = t * frame.t_max;
      double spot_equiv = k * frame.k_max * std::exp(frame.rate * tau);
      double sig_true = sigma_exact(spot_equiv / frame.spot, tau);
      double sig_fit = unscale_volatility(eta_eval(model, k, t), frame);
      rms += (sig_fit - sig_true) * (sig_fit - sig_true);
      ++count;
    }
  rms = std::sqrt(rms / count);
  REQUIRE(rms < 1e-3);

  // Quotes from the exact field; reprice under the fitted model.
  SimConfig gen;
  gen.n_paths = 20000;
  gen.seed = 5;
  gen.stream = rng::StreamTag::DatasetGeneration;
  GridSpec grid{3, 6};
  SyntheticDataset data =
      generate_synthetic_dataset(grid, exact_field(frame), frame, gen);

  SimConfig rep;
  rep.n_paths = 20000;
  rep.seed = 6;
  RepriceReport report = reprice_quotes(model, data.quotes, frame, rep);

  double floor_sq = 0.0;
  for (std::size_t i = 0; i < data.quotes.size(); ++i) {
    double se_gen = data.std_errors[i];
    double se_rep = report.prices[i].std_error;
    floor_sq += se_gen * se_gen + se_rep * se_rep;
  }
  double noise_floor = std::sqrt(floor_sq / static_cast<double>(data.quotes.size()));
  CHECK(report.rmse <= 3.0 * noise_floor);
}

TEST_CASE("surface grids and RMSE helpers") {
  MarketFrame frame = synthetic_frame();
  ArrayXd strikes = ArrayXd::LinSpaced(8, 500.0, 3000.0);
  ArrayXd maturities = ArrayXd::LinSpaced(5, 0.3, 1.5);

  ArrayXXd exact = exact_vol_grid(frame, strikes, maturities);
  CHECK(surface_rmse(exact, exact) == 0.0);
  ArrayXXd shifted = exact + 0.07;
  CHECK(surface_rmse(exact, shifted) == doctest::Approx(0.07).epsilon(1e-12));

  // Calibrated-surface grid matches pointwise eta evaluation.
  VolSurfaceModel model = make_vol_model(init_params(NetConfig{2, 8}, 3), frame);
  ArrayXXd grid = vol_surface_grid(model, strikes, maturities);
  for (Eigen::Index ti = 0; ti < maturities.size(); ++ti)
    for (Eigen::Index ki = 0; ki < strikes.size(); ++ki) {
      double k = std::exp(-frame.rate * maturities[ti]) * strikes[ki] / frame.k_max;
      double eta = eta_eval(model, k, maturities[ti] / frame.t_max);
      CHECK(grid(ti, ki) ==
            doctest::Approx(unscale_volatility(eta, frame)).epsilon(1e-12));
    }

  // MC price grid equals per-node pricing.
  SimConfig sim;
  sim.n_paths = 2000;
  sim.seed = 2;
  PathEnsemble paths = simulate_paths(exact_field(frame), frame, sim);
  ArrayXXd prices = mc_price_grid(paths, strikes, maturities, frame);
  CHECK(prices(2, 3) ==
        doctest::Approx(mc_price(paths, strikes[3], maturities[2], frame).price)
            .epsilon(1e-14));
}
