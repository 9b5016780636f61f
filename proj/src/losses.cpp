#include "volcal/losses.hpp"

#include <algorithm>
#include <cmath>

namespace volcal {

namespace {

std::vector<double> to_std(const ArrayXd& a) {
  return {a.data(), a.data() + a.size()};
}

ArrayXd weights_of(const ArrayXd& values) {
  std::vector<double> w = balance_weights(to_std(values));
  return Eigen::Map<const ArrayXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

/// Weighted MSE of the price model against reference values at (k, t);
/// when grad != nullptr accumulates lambda * dLoss/dtheta into it.
double value_mse(const PriceSurfaceModel& model, const ArrayXd& k,
                 const ArrayXd& t, const ArrayXd& reference,
                 const ArrayXd& weights, double lambda, VectorXd* grad) {
  const double n = static_cast<double>(k.size());
  batch::NetWorkspace ws;
  ArrayXd value = batch::price_value_forward(model, k, t, ws);
  ArrayXd err = value - reference;
  double loss = (weights * err.square()).sum() / n;
  if (grad) {
    ArrayXd adj = lambda * 2.0 / n * weights * err;
    batch::price_value_backward(model, ws, adj, *grad);
  }
  return loss;
}

struct DomainTerms {
  double arb = 0.0;
  double dup = 0.0;
};

/// Shared-batch evaluation of L_arb and L_dup over the M2 domain points,
/// chunked. Price adjoints are scaled by the respective lambdas into
/// price_grad; vol_grad receives the unscaled d L_dup / d theta_eta.
DomainTerms domain_terms(const PriceSurfaceModel& price,
                         const VolSurfaceModel* vol, const ArrayXd& k,
                         const ArrayXd& t, const MarketFrame& frame,
                         double lambda_arb, double lambda_dup,
                         VectorXd* price_grad, VectorXd* vol_grad, int chunk) {
  const Eigen::Index m2 = k.size();
  if (m2 == 0) fail(ErrorCode::EmptyInput, "domain batch is empty");
  chunk = std::max(1, chunk);
  const int n_chunks = static_cast<int>((m2 + chunk - 1) / chunk);

  std::vector<batch::NetWorkspace> price_ws(
      static_cast<std::size_t>(price_grad ? n_chunks : 1));
  std::vector<batch::NetWorkspace> vol_ws(
      static_cast<std::size_t>(vol && vol_grad ? n_chunks : 1));

  batch::JetRows jets;
  jets.resize(m2);
  ArrayXd eta = ArrayXd::Zero(m2);

  for (int c = 0; c < n_chunks; ++c) {
    Eigen::Index lo = static_cast<Eigen::Index>(c) * chunk;
    Eigen::Index len = std::min<Eigen::Index>(chunk, m2 - lo);
    ArrayXd kc = k.segment(lo, len), tc = t.segment(lo, len);
    auto& pws = price_ws[static_cast<std::size_t>(price_grad ? c : 0)];
    batch::JetRows out = batch::price_jet_forward(price, kc, tc, pws);
    jets.v.segment(lo, len) = out.v;
    jets.dk.segment(lo, len) = out.dk;
    jets.dt.segment(lo, len) = out.dt;
    jets.dkk.segment(lo, len) = out.dkk;
    if (vol) {
      auto& vws = vol_ws[static_cast<std::size_t>(vol_grad ? c : 0)];
      eta.segment(lo, len) = batch::eta_forward(*vol, kc, tc, vws);
    }
  }

  // Weights come from the detached d pi/dt values over the full batch.
  ArrayXd w = weights_of(jets.dt);

  const double ct = frame.rate * frame.t_max;
  ArrayXd f_arb = jets.dt - ct * k * jets.dk.max(0.0);
  ArrayXd arb_violation = (-f_arb).max(0.0);
  DomainTerms terms;
  const double m2d = static_cast<double>(m2);
  terms.arb = (w * arb_violation.square()).sum() / m2d;

  ArrayXd f_dup;
  if (vol) {
    f_dup = jets.dt - eta * k.square() * jets.dkk;
    terms.dup = (w * f_dup.square()).sum() / m2d;
  }

  if (price_grad || (vol_grad && vol)) {
    // d L_arb / d f_arb and d L_dup / d f_dup per point.
    ArrayXd darb = -2.0 / m2d * w * arb_violation;  // zero when f_arb >= 0
    ArrayXd ddup = vol ? (2.0 / m2d * w * f_dup).eval() : ArrayXd();

    for (int c = 0; c < n_chunks; ++c) {
      Eigen::Index lo = static_cast<Eigen::Index>(c) * chunk;
      Eigen::Index len = std::min<Eigen::Index>(chunk, m2 - lo);
      if (price_grad) {
        batch::JetRows adj;
        adj.resize(len);
        adj.v.setZero();
        ArrayXd a = lambda_arb * darb.segment(lo, len);
        adj.dt = a;
        // f_arb = dt - ct k (dk)^+ : clipped slope in dk.
        adj.dk = -ct * k.segment(lo, len) * a *
                 (jets.dk.segment(lo, len) > 0.0).cast<double>();
        adj.dkk.setZero(len);
        if (vol) {
          ArrayXd d = lambda_dup * ddup.segment(lo, len);
          adj.dt += d;
          adj.dkk = -eta.segment(lo, len) * k.segment(lo, len).square() * d;
        }
        batch::price_jet_backward(price, price_ws[static_cast<std::size_t>(c)],
                                  adj, *price_grad);
      }
      if (vol_grad && vol) {
        // d f_dup / d eta = -k^2 dkk; gradient of the unscaled L_dup.
        ArrayXd eta_adj = ddup.segment(lo, len) *
                          (-k.segment(lo, len).square() *
                           jets.dkk.segment(lo, len));
        batch::eta_backward(*vol, vol_ws[static_cast<std::size_t>(c)], eta_adj,
                            *vol_grad);
      }
    }
  }
  return terms;
}

}  // namespace

CollocationBatch sample_batch(int m1, int m2, rng::CounterStream& stream) {
  if (m1 < 1 || m2 < 1)
    fail(ErrorCode::EmptyInput, "sample_batch requires M1, M2 >= 1");
  CollocationBatch batch;
  batch.initial_k.resize(m1);
  for (int i = 0; i < m1; ++i) batch.initial_k[i] = stream.next_uniform();
  batch.domain_k.resize(m2);
  batch.domain_t.resize(m2);
  for (int i = 0; i < m2; ++i) {
    batch.domain_k[i] = stream.next_uniform();
    batch.domain_t[i] = stream.next_uniform();
  }
  return batch;
}

LossBreakdown total_loss(double fit, double ini, double arb, double dup,
                         const LossCoefficients& c) {
  LossBreakdown out;
  out.fit = fit;
  out.ini = ini;
  out.arb = arb;
  out.dup = dup;
  out.total = fit + c.lambda_ini * ini + c.lambda_arb * arb + c.lambda_dup * dup;
  return out;
}

double loss_fit(const PriceSurfaceModel& model,
                std::span<const ScaledQuote> quotes) {
  if (quotes.empty()) fail(ErrorCode::EmptyInput, "loss_fit: no quotes");
  const Eigen::Index n = static_cast<Eigen::Index>(quotes.size());
  ArrayXd k(n), t(n), pi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k[i] = quotes[static_cast<std::size_t>(i)].k;
    t[i] = quotes[static_cast<std::size_t>(i)].t;
    pi[i] = quotes[static_cast<std::size_t>(i)].price;
  }
  return value_mse(model, k, t, pi, weights_of(pi), 1.0, nullptr);
}

double loss_ini(const PriceSurfaceModel& model, const CollocationBatch& batch,
                const MarketFrame& frame) {
  if (batch.initial_k.size() == 0)
    fail(ErrorCode::EmptyInput, "loss_ini: empty initial batch");
  ArrayXd payoff(batch.initial_k.size());
  for (Eigen::Index i = 0; i < payoff.size(); ++i)
    payoff[i] = initial_payoff(batch.initial_k[i], frame);
  ArrayXd zeros = ArrayXd::Zero(batch.initial_k.size());
  return value_mse(model, batch.initial_k, zeros, payoff, weights_of(payoff),
                   1.0, nullptr);
}

double loss_arb(const PriceSurfaceModel& model, const CollocationBatch& batch,
                const MarketFrame& frame) {
  return domain_terms(model, nullptr, batch.domain_k, batch.domain_t, frame,
                      1.0, 0.0, nullptr, nullptr, 2048)
      .arb;
}

double loss_dup(const PriceSurfaceModel& price, const VolSurfaceModel& vol,
                const CollocationBatch& batch) {
  return domain_terms(price, &vol, batch.domain_k, batch.domain_t, price.frame,
                      0.0, 1.0, nullptr, nullptr, 2048)
      .dup;
}

LossEvaluation evaluate_losses(const PriceSurfaceModel& price,
                               const VolSurfaceModel& vol,
                               std::span<const ScaledQuote> quotes,
                               const CollocationBatch& batch,
                               const LossCoefficients& coeffs,
                               const LossEvalOptions& options) {
  if (quotes.empty()) fail(ErrorCode::EmptyInput, "evaluate_losses: no quotes");
  if (batch.initial_k.size() == 0 || batch.domain_k.size() == 0)
    fail(ErrorCode::EmptyInput, "evaluate_losses: empty batch");

  LossEvaluation out;
  const int total = price.params.layout().total;
  VectorXd* pg = nullptr;
  VectorXd* vg = nullptr;
  if (options.price_gradient) {
    out.price_grad = VectorXd::Zero(total);
    pg = &out.price_grad;
  }
  if (options.vol_gradient) {
    out.vol_grad = VectorXd::Zero(vol.params.layout().total);
    vg = &out.vol_grad;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(quotes.size());
  ArrayXd kq(n), tq(n), pq(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    kq[i] = quotes[static_cast<std::size_t>(i)].k;
    tq[i] = quotes[static_cast<std::size_t>(i)].t;
    pq[i] = quotes[static_cast<std::size_t>(i)].price;
  }
  double fit = value_mse(price, kq, tq, pq, weights_of(pq), 1.0, pg);

  ArrayXd payoff(batch.initial_k.size());
  for (Eigen::Index i = 0; i < payoff.size(); ++i)
    payoff[i] = initial_payoff(batch.initial_k[i], price.frame);
  ArrayXd zeros = ArrayXd::Zero(batch.initial_k.size());
  double ini = value_mse(price, batch.initial_k, zeros, payoff,
                         weights_of(payoff), coeffs.lambda_ini, pg);

  DomainTerms dom =
      domain_terms(price, &vol, batch.domain_k, batch.domain_t, price.frame,
                   coeffs.lambda_arb, coeffs.lambda_dup, pg, vg, options.chunk);

  out.losses = total_loss(fit, ini, dom.arb, dom.dup, coeffs);
  return out;
}

}  // namespace volcal
