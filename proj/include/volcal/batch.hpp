#pragma once

// Batched evaluation of the networks over many points at once, with an
// analytic reverse pass that accumulates parameter gradients. This is the
// training/evaluation hot path; the per-point templated code in net.hpp is
// the slow reference, and the unit tests pin the two against each other and
// against the reverse-mode tape.
//
// Layout: points sit in columns. Jet components (value, d/dk, d/dt, d^2/dk^2)
// are concatenated along the column axis into w x 4B matrices so each linear
// layer is a single GEMM.

#include <Eigen/Dense>
#include <vector>

#include "volcal/core.hpp"
#include "volcal/net.hpp"

namespace volcal::batch {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Output jets for a batch of points.
struct JetRows {
  ArrayXd v, dk, dt, dkk;

  void resize(Eigen::Index n) {
    v.resize(n);
    dk.resize(n);
    dt.resize(n);
    dkk.resize(n);
  }
};

/// Forward activations cached for the reverse pass. One workspace per
/// (network, chunk); reusable across iterations to avoid reallocation.
struct NetWorkspace {
  int batch = 0;
  int comps = 0;
  ArrayXd k, t;
  MatrixXd input;     // 2 x CB, lift input (jet-seeded)
  MatrixXd lift_out;  // w x CB, post lift (and affine)
  struct BlockCache {
    MatrixXd t1, z, t2, x_out;
    MatrixXd pre_a1, pre_a2;  // pre-affine linear outputs (affine nets only)
  };
  std::vector<BlockCache> blocks;
  MatrixXd pre_lift_a;
  RowVectorXd head_u;  // 1 x CB, pre-softplus
  JetRows net_out;     // raw net output jets (wrapper backward consumes these)
};

/// Raw network jets at (k_i, t_i); fills `ws` for a later backward pass.
JetRows net_jet_forward(const NetParams& params, const ParamLayout& layout,
                        const ArrayXd& k, const ArrayXd& t, NetWorkspace& ws);

/// Raw network values only (comps = 1).
ArrayXd net_value_forward(const NetParams& params, const ParamLayout& layout,
                          const ArrayXd& k, const ArrayXd& t, NetWorkspace& ws);

/// Accumulates d(sum_i adj_i . jet_i)/d(params) into `grad` (size layout.total).
void net_jet_backward(const NetParams& params, const ParamLayout& layout,
                      const NetWorkspace& ws, const JetRows& adj, VectorXd& grad);

void net_value_backward(const NetParams& params, const ParamLayout& layout,
                        const NetWorkspace& ws, const ArrayXd& adj, VectorXd& grad);

// --- model level (ansatz wrapper included) ----------------------------------

/// Price-surface jets (pi, dpi/dk, dpi/dt, d2pi/dk2) at scaled points.
JetRows price_jet_forward(const PriceSurfaceModel& model, const ArrayXd& k,
                          const ArrayXd& t, NetWorkspace& ws);

void price_jet_backward(const PriceSurfaceModel& model, const NetWorkspace& ws,
                        const JetRows& adj, VectorXd& grad);

/// Price values only.
ArrayXd price_value_forward(const PriceSurfaceModel& model, const ArrayXd& k,
                            const ArrayXd& t, NetWorkspace& ws);

void price_value_backward(const PriceSurfaceModel& model, const NetWorkspace& ws,
                          const ArrayXd& adj, VectorXd& grad);

/// Squared local volatility eta(k, t).
ArrayXd eta_forward(const VolSurfaceModel& model, const ArrayXd& k,
                    const ArrayXd& t, NetWorkspace& ws);

void eta_backward(const VolSurfaceModel& model, const NetWorkspace& ws,
                  const ArrayXd& adj, VectorXd& grad);

/// Convenience: values without keeping a workspace alive.
ArrayXd price_values(const PriceSurfaceModel& model, const ArrayXd& k,
                     const ArrayXd& t);
ArrayXd eta_values(const VolSurfaceModel& model, const ArrayXd& k,
                   const ArrayXd& t);

}  // namespace volcal::batch
