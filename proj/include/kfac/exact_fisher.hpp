// Copyright 2026 The kfac-bench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KFAC_EXACT_FISHER_HPP
#define KFAC_EXACT_FISHER_HPP

#include <optional>

#include "kfac/net.hpp"

namespace kfac {

/// Matrix-free products with the exact Fisher F = mean_x J^T F_R J, where J
/// is the Jacobian of the network output z (a_L, or s_L for softmax) and F_R
/// is the Fisher of the predictive distribution at z: I for the unit
/// variance Gaussian, diag(p) - p p^T for the softmax.
///
/// All functions take the PassRecord of a forward pass over the batch; only
/// the forward quantities (abar, s, output) are read.

/// Per-case directional derivatives J v of the output, d_L x m.
Mat jacobian_vec(const Architecture& arch, const ParamVector& theta, const PassRecord& record,
                 const ParamVector& v);

/// Multiplies each column of `jv` by the per-case F_R.
Mat output_fisher_apply(const Architecture& arch, const PassRecord& record, const Mat& jv);

/// F v averaged over the batch (J v, then F_R, then J^T).
ParamVector fisher_vec(const Architecture& arch, const ParamVector& theta,
                       const PassRecord& record, const ParamVector& v);

struct QuadScalars {
  double vFv = 0.0;
  double uFv = 0.0;
  double uFu = 0.0;
  double grad_dot_v = 0.0;
  double grad_dot_u = 0.0;
  double v_dot_v = 0.0;
  double u_dot_v = 0.0;
  double u_dot_u = 0.0;
  double lambda_eta = 0.0;

  // Entries of the damped curvature C = F + (lambda + eta) I.
  double vCv() const { return vFv + lambda_eta * v_dot_v; }
  double uCv() const { return uFv + lambda_eta * u_dot_v; }
  double uCu() const { return uFu + lambda_eta * u_dot_u; }
};

/// v^T F v, u^T F v and u^T F u from the J v and J u forward passes only.
QuadScalars quad_scalars(const Architecture& arch, const ParamVector& theta,
                         const PassRecord& record, const ParamVector& v, const ParamVector& u,
                         const ParamVector& grad, double lambda_eta);

/// Largest parameter count dense_fisher will assemble.
inline constexpr Eigen::Index kDenseFisherLimit = 5000;

/// Dense F assembled column by column with fisher_vec. Test/diagnostic use.
Mat dense_fisher(const Architecture& arch, const ParamVector& theta, const PassRecord& record);

/// M(delta) = 1/2 delta^T (F + lambda_eta I) delta + grad^T delta + h_theta.
double quad_model(const Architecture& arch, const ParamVector& theta, const PassRecord& record,
                  const ParamVector& grad, const ParamVector& delta, double lambda_eta,
                  double h_theta);

/// rho = (h_new - h_old) / (M(delta) - h_old). Empty when the predicted
/// change is degenerate, which callers treat as "skip adaptation".
std::optional<double> reduction_ratio(double h_new, double h_old, double model_value);

}  // namespace kfac

#endif
