#include "volcal/batch.hpp"

#include <cmath>

namespace volcal::batch {

namespace {

using Eigen::Map;

using ConstMat = Map<const MatrixXd>;
using ConstVec = Map<const VectorXd>;
using MutMat = Map<MatrixXd>;
using MutVec = Map<VectorXd>;

inline ConstMat weight(const NetParams& p, int offset, int rows, int cols) {
  return ConstMat(p.values.data() + offset, rows, cols);
}
inline ConstVec bias(const NetParams& p, int offset, int n) {
  return ConstVec(p.values.data() + offset, n);
}
inline MutMat grad_mat(VectorXd& g, int offset, int rows, int cols) {
  return MutMat(g.data() + offset, rows, cols);
}
inline MutVec grad_vec(VectorXd& g, int offset, int n) {
  return MutVec(g.data() + offset, n);
}

// Vectorized tanh through exp; same formula as the scalar path.
inline void tanh_array(const Eigen::Ref<const Eigen::ArrayXXd>& x,
                       Eigen::Ref<Eigen::ArrayXXd> out) {
  out = 1.0 - 2.0 * ((2.0 * x).exp() + 1.0).inverse();
}

inline void logistic_array(const Eigen::Ref<const Eigen::ArrayXXd>& x,
                           Eigen::Ref<Eigen::ArrayXXd> out) {
  out = ((-x).exp() + 1.0).inverse();
}

// tanh over a jet-concatenated matrix: value block through tanh, derivative
// blocks through the chain rule  u' = s x', u'' = s x'' - 2 u s (x')^2.
MatrixXd tanh_forward_cat(const MatrixXd& x, int b, int comps) {
  const Eigen::Index w = x.rows();
  MatrixXd u(w, x.cols());
  tanh_array(x.leftCols(b).array(), u.leftCols(b).array());
  if (comps == 1) return u;

  Eigen::ArrayXXd s = 1.0 - u.leftCols(b).array().square();
  u.middleCols(b, b).array() = s * x.middleCols(b, b).array();
  u.middleCols(2 * b, b).array() = s * x.middleCols(2 * b, b).array();
  u.middleCols(3 * b, b).array() =
      s * x.middleCols(3 * b, b).array() -
      2.0 * u.leftCols(b).array() * s * x.middleCols(b, b).array().square();
  return u;
}

MatrixXd tanh_backward_cat(const MatrixXd& u_hat, const MatrixXd& x,
                           const MatrixXd& u, int b, int comps) {
  const Eigen::Index w = x.rows();
  MatrixXd x_hat(w, x.cols());
  Eigen::ArrayXXd s = 1.0 - u.leftCols(b).array().square();
  if (comps == 1) {
    x_hat.array() = u_hat.array() * s;
    return x_hat;
  }
  auto uv = u.leftCols(b).array();
  auto xk = x.middleCols(b, b).array();
  auto xt = x.middleCols(2 * b, b).array();
  auto xkk = x.middleCols(3 * b, b).array();
  auto hv = u_hat.leftCols(b).array();
  auto hk = u_hat.middleCols(b, b).array();
  auto ht = u_hat.middleCols(2 * b, b).array();
  auto hkk = u_hat.middleCols(3 * b, b).array();

  Eigen::ArrayXXd c2 = -2.0 * uv * s;                 // tanh''
  Eigen::ArrayXXd dc2 = 2.0 * s * (2.0 * uv.square() - s);  // d tanh''/dx

  x_hat.leftCols(b).array() =
      hv * s + c2 * (hk * xk + ht * xt + hkk * xkk) + dc2 * hkk * xk.square();
  x_hat.middleCols(b, b).array() = s * hk + 2.0 * c2 * xk * hkk;
  x_hat.middleCols(2 * b, b).array() = s * ht;
  x_hat.middleCols(3 * b, b).array() = s * hkk;
  return x_hat;
}

// Softplus on the (1 x CB) head row.
RowVectorXd softplus_forward_row(const RowVectorXd& u, int b, int comps) {
  RowVectorXd y(u.cols());
  auto uv = u.leftCols(b).array();
  y.leftCols(b).array() = (uv > 0.0).select(uv + (-uv).exp().log1p(), uv.exp().log1p());
  if (comps == 1) return y;
  Eigen::ArrayXXd p = ((-uv).exp() + 1.0).inverse();
  y.middleCols(b, b).array() = p * u.middleCols(b, b).array();
  y.middleCols(2 * b, b).array() = p * u.middleCols(2 * b, b).array();
  y.middleCols(3 * b, b).array() =
      p * u.middleCols(3 * b, b).array() +
      p * (1.0 - p) * u.middleCols(b, b).array().square();
  return y;
}

RowVectorXd softplus_backward_row(const RowVectorXd& y_hat, const RowVectorXd& u,
                                  int b, int comps) {
  RowVectorXd u_hat(u.cols());
  auto uv = u.leftCols(b).array();
  Eigen::ArrayXXd p = ((-uv).exp() + 1.0).inverse();
  if (comps == 1) {
    u_hat.array() = y_hat.array() * p;
    return u_hat;
  }
  auto uk = u.middleCols(b, b).array();
  auto ut = u.middleCols(2 * b, b).array();
  auto ukk = u.middleCols(3 * b, b).array();
  auto hv = y_hat.leftCols(b).array();
  auto hk = y_hat.middleCols(b, b).array();
  auto ht = y_hat.middleCols(2 * b, b).array();
  auto hkk = y_hat.middleCols(3 * b, b).array();
  Eigen::ArrayXXd dp = p * (1.0 - p);
  Eigen::ArrayXXd ddp = dp * (1.0 - 2.0 * p);

  u_hat.leftCols(b).array() =
      hv * p + dp * (hk * uk + ht * ut + hkk * ukk) + ddp * hkk * uk.square();
  u_hat.middleCols(b, b).array() = p * hk + 2.0 * dp * uk * hkk;
  u_hat.middleCols(2 * b, b).array() = p * ht;
  u_hat.middleCols(3 * b, b).array() = p * hkk;
  return u_hat;
}

// Per-unit affine y = s .* x + c (shift on the value block only).
void affine_forward(const NetParams& p, const ParamLayout::Affine& a,
                    MatrixXd& x, MatrixXd& pre_cache, int b, int comps,
                    bool cache) {
  const int w = static_cast<int>(x.rows());
  if (cache) pre_cache = x;
  auto scale = bias(p, a.scale, w);
  x.array().colwise() *= scale.array();
  x.leftCols(b).colwise() += bias(p, a.shift, w);
  (void)comps;
}

void affine_backward(const NetParams& p, const ParamLayout::Affine& a,
                     const MatrixXd& pre, MatrixXd& x_hat, VectorXd& grad,
                     int b) {
  const int w = static_cast<int>(x_hat.rows());
  grad_vec(grad, a.scale, w) += (x_hat.array() * pre.array()).rowwise().sum().matrix();
  grad_vec(grad, a.shift, w) += x_hat.leftCols(b).rowwise().sum();
  x_hat.array().colwise() *= bias(p, a.scale, w).array();
}

// Shared forward pass; comps is 1 (values) or 4 (jets).
void forward_impl(const NetParams& params, const ParamLayout& layout,
                  const ArrayXd& k, const ArrayXd& t, int comps,
                  NetWorkspace& ws) {
  if (!params.finite())
    fail(ErrorCode::NonFiniteParams, "batched forward: non-finite parameters");
  const int w = layout.width;
  const int b = static_cast<int>(k.size());
  const int cb = comps * b;
  ws.batch = b;
  ws.comps = comps;
  ws.k = k;
  ws.t = t;

  // Jet-seeded lift input: value block (k,t); dk block (1,0); dt block (0,1).
  ws.input.setZero(2, cb);
  ws.input.row(0).leftCols(b) = k.matrix().transpose();
  ws.input.row(1).leftCols(b) = t.matrix().transpose();
  if (comps == 4) {
    ws.input.row(0).middleCols(b, b).setOnes();
    ws.input.row(1).middleCols(2 * b, b).setOnes();
  }

  ws.lift_out.resize(w, cb);
  ws.lift_out.noalias() = weight(params, layout.lift_w, w, 2) * ws.input;
  ws.lift_out.leftCols(b).colwise() += bias(params, layout.lift_b, w);
  if (layout.affine)
    affine_forward(params, layout.lift_a, ws.lift_out, ws.pre_lift_a, b, comps, true);

  ws.blocks.resize(layout.block.size());
  const MatrixXd* x = &ws.lift_out;
  for (std::size_t i = 0; i < layout.block.size(); ++i) {
    const auto& blk = layout.block[i];
    auto& cache = ws.blocks[i];
    cache.t1 = tanh_forward_cat(*x, b, comps);
    cache.z.resize(w, cb);
    cache.z.noalias() = weight(params, blk.w1, w, w) * cache.t1;
    cache.z.leftCols(b).colwise() += bias(params, blk.b1, w);
    if (layout.affine)
      affine_forward(params, blk.a1, cache.z, cache.pre_a1, b, comps, true);
    cache.t2 = tanh_forward_cat(cache.z, b, comps);
    cache.x_out.resize(w, cb);
    cache.x_out.noalias() = weight(params, blk.w2, w, w) * cache.t2;
    cache.x_out.leftCols(b).colwise() += bias(params, blk.b2, w);
    if (layout.affine)
      affine_forward(params, blk.a2, cache.x_out, cache.pre_a2, b, comps, true);
    cache.x_out += *x;
    x = &cache.x_out;
  }

  RowVectorXd u(cb);
  u.noalias() = bias(params, layout.head_w, w).transpose() * (*x);
  u.leftCols(b).array() += params.values[static_cast<std::size_t>(layout.head_b)];
  ws.head_u = std::move(u);

  RowVectorXd y = softplus_forward_row(ws.head_u, b, comps);
  ws.net_out.v = y.leftCols(b).transpose().array();
  if (comps == 4) {
    ws.net_out.dk = y.middleCols(b, b).transpose().array();
    ws.net_out.dt = y.middleCols(2 * b, b).transpose().array();
    ws.net_out.dkk = y.middleCols(3 * b, b).transpose().array();
  } else {
    ws.net_out.dk.resize(0);
    ws.net_out.dt.resize(0);
    ws.net_out.dkk.resize(0);
  }
}

// Shared reverse pass; y_hat is the adjoint of the head output (1 x CB).
void backward_impl(const NetParams& params, const ParamLayout& layout,
                   const NetWorkspace& ws, const RowVectorXd& y_hat,
                   VectorXd& grad) {
  const int w = layout.width;
  const int b = ws.batch;
  const int comps = ws.comps;

  RowVectorXd u_hat = softplus_backward_row(y_hat, ws.head_u, b, comps);

  const MatrixXd& head_in =
      ws.blocks.empty() ? ws.lift_out : ws.blocks.back().x_out;
  grad_vec(grad, layout.head_w, w).noalias() += head_in * u_hat.transpose();
  grad[layout.head_b] += u_hat.leftCols(b).sum();

  MatrixXd x_hat(w, comps * b);
  x_hat.noalias() = bias(params, layout.head_w, w) * u_hat;

  for (std::size_t ri = layout.block.size(); ri-- > 0;) {
    const auto& blk = layout.block[ri];
    const auto& cache = ws.blocks[ri];
    const MatrixXd& x_in = ri == 0 ? ws.lift_out : ws.blocks[ri - 1].x_out;

    // x_out = x_in + affine2(W2 t2 + b2); the skip adjoint is x_hat itself.
    MatrixXd branch_hat = x_hat;
    if (layout.affine)
      affine_backward(params, blk.a2, cache.pre_a2, branch_hat, grad, b);
    grad_mat(grad, blk.w2, w, w).noalias() += branch_hat * cache.t2.transpose();
    grad_vec(grad, blk.b2, w) += branch_hat.leftCols(b).rowwise().sum();
    MatrixXd t2_hat(w, comps * b);
    t2_hat.noalias() = weight(params, blk.w2, w, w).transpose() * branch_hat;

    MatrixXd z_hat = tanh_backward_cat(t2_hat, cache.z, cache.t2, b, comps);
    if (layout.affine)
      affine_backward(params, blk.a1, cache.pre_a1, z_hat, grad, b);
    grad_mat(grad, blk.w1, w, w).noalias() += z_hat * cache.t1.transpose();
    grad_vec(grad, blk.b1, w) += z_hat.leftCols(b).rowwise().sum();
    MatrixXd t1_hat(w, comps * b);
    t1_hat.noalias() = weight(params, blk.w1, w, w).transpose() * z_hat;

    x_hat += tanh_backward_cat(t1_hat, x_in, cache.t1, b, comps);
  }

  if (layout.affine)
    affine_backward(params, layout.lift_a, ws.pre_lift_a, x_hat, grad, b);
  grad_mat(grad, layout.lift_w, w, 2).noalias() += x_hat * ws.input.transpose();
  grad_vec(grad, layout.lift_b, w) += x_hat.leftCols(b).rowwise().sum();
}

RowVectorXd pack_jet_adjoint(const JetRows& adj, int b) {
  RowVectorXd y_hat(4 * b);
  y_hat.leftCols(b) = adj.v.matrix().transpose();
  y_hat.middleCols(b, b) = adj.dk.matrix().transpose();
  y_hat.middleCols(2 * b, b) = adj.dt.matrix().transpose();
  y_hat.middleCols(3 * b, b) = adj.dkk.matrix().transpose();
  return y_hat;
}

}  // namespace

JetRows net_jet_forward(const NetParams& params, const ParamLayout& layout,
                        const ArrayXd& k, const ArrayXd& t, NetWorkspace& ws) {
  forward_impl(params, layout, k, t, 4, ws);
  return ws.net_out;
}

ArrayXd net_value_forward(const NetParams& params, const ParamLayout& layout,
                          const ArrayXd& k, const ArrayXd& t, NetWorkspace& ws) {
  forward_impl(params, layout, k, t, 1, ws);
  return ws.net_out.v;
}

void net_jet_backward(const NetParams& params, const ParamLayout& layout,
                      const NetWorkspace& ws, const JetRows& adj,
                      VectorXd& grad) {
  backward_impl(params, layout, ws, pack_jet_adjoint(adj, ws.batch), grad);
}

void net_value_backward(const NetParams& params, const ParamLayout& layout,
                        const NetWorkspace& ws, const ArrayXd& adj,
                        VectorXd& grad) {
  backward_impl(params, layout, ws, adj.matrix().transpose(), grad);
}

// --- model level -------------------------------------------------------------

JetRows price_jet_forward(const PriceSurfaceModel& model, const ArrayXd& k,
                          const ArrayXd& t, NetWorkspace& ws) {
  ParamLayout layout = model.params.layout();
  net_jet_forward(model.params, layout, k, t, ws);
  const Eigen::Index n = k.size();
  JetRows out;
  out.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Jet<double> nj{ws.net_out.v[i], ws.net_out.dk[i], ws.net_out.dt[i],
                   ws.net_out.dkk[i]};
    Jet<double> pi =
        price_ansatz_jet<double>(nj, k[i], t[i], model.frame, model.kind);
    out.v[i] = pi.v;
    out.dk[i] = pi.dk;
    out.dt[i] = pi.dt;
    out.dkk[i] = pi.dkk;
  }
  return out;
}

void price_jet_backward(const PriceSurfaceModel& model, const NetWorkspace& ws,
                        const JetRows& adj, VectorXd& grad) {
  ParamLayout layout = model.params.layout();
  const Eigen::Index n = ws.k.size();
  JetRows net_adj;
  net_adj.resize(n);
  // Chain rule through the wrapper: the 4x4 Jacobian d(pi jet)/d(N jet) comes
  // from one Dual4-seeded wrapper evaluation per point.
  for (Eigen::Index i = 0; i < n; ++i) {
    Jet<Dual4> nj{Dual4::seeded(ws.net_out.v[i], 0),
                  Dual4::seeded(ws.net_out.dk[i], 1),
                  Dual4::seeded(ws.net_out.dt[i], 2),
                  Dual4::seeded(ws.net_out.dkk[i], 3)};
    Jet<Dual4> pi = price_ansatz_jet<Dual4>(nj, Dual4(ws.k[i]), Dual4(ws.t[i]),
                                            model.frame, model.kind);
    const double gv = adj.v[i], gk = adj.dk[i], gt = adj.dt[i], gkk = adj.dkk[i];
    for (int slot = 0; slot < 4; ++slot) {
      double acc = gv * pi.v.d[slot] + gk * pi.dk.d[slot] + gt * pi.dt.d[slot] +
                   gkk * pi.dkk.d[slot];
      switch (slot) {
        case 0: net_adj.v[i] = acc; break;
        case 1: net_adj.dk[i] = acc; break;
        case 2: net_adj.dt[i] = acc; break;
        case 3: net_adj.dkk[i] = acc; break;
      }
    }
  }
  net_jet_backward(model.params, layout, ws, net_adj, grad);
}

ArrayXd price_value_forward(const PriceSurfaceModel& model, const ArrayXd& k,
                            const ArrayXd& t, NetWorkspace& ws) {
  ParamLayout layout = model.params.layout();
  ArrayXd n = net_value_forward(model.params, layout, k, t, ws);
  const MarketFrame& f = model.frame;
  if (model.kind == OptionKind::Call)
    return f.spot * (1.0 - (-(1.0 - k) * n).exp());
  return f.k_max * (f.rate * f.t_max * t).exp() * k * (1.0 - (-k * n).exp());
}

void price_value_backward(const PriceSurfaceModel& model, const NetWorkspace& ws,
                          const ArrayXd& adj, VectorXd& grad) {
  ParamLayout layout = model.params.layout();
  const MarketFrame& f = model.frame;
  ArrayXd net_adj;
  if (model.kind == OptionKind::Call) {
    // d pi / d N = S0 (1-k) e^{-(1-k) N}
    net_adj = adj * f.spot * (1.0 - ws.k) * (-(1.0 - ws.k) * ws.net_out.v).exp();
  } else {
    // d pi / d N = K_max e^{r T_max t} k^2 e^{-k N}
    net_adj = adj * f.k_max * (f.rate * f.t_max * ws.t).exp() * ws.k.square() *
              (-ws.k * ws.net_out.v).exp();
  }
  net_value_backward(model.params, layout, ws, net_adj, grad);
}

ArrayXd eta_forward(const VolSurfaceModel& model, const ArrayXd& k,
                    const ArrayXd& t, NetWorkspace& ws) {
  ParamLayout layout = model.params.layout();
  return net_value_forward(model.params, layout, k, t, ws);
}

void eta_backward(const VolSurfaceModel& model, const NetWorkspace& ws,
                  const ArrayXd& adj, VectorXd& grad) {
  ParamLayout layout = model.params.layout();
  net_value_backward(model.params, layout, ws, adj, grad);
}

ArrayXd price_values(const PriceSurfaceModel& model, const ArrayXd& k,
                     const ArrayXd& t) {
  NetWorkspace ws;
  return price_value_forward(model, k, t, ws);
}

ArrayXd eta_values(const VolSurfaceModel& model, const ArrayXd& k,
                   const ArrayXd& t) {
  NetWorkspace ws;
  return eta_forward(model, k, t, ws);
}

}  // namespace volcal::batch
