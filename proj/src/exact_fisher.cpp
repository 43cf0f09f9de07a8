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

#include "kfac/exact_fisher.hpp"

#include <cmath>

namespace kfac {

namespace {

Mat activation_slope(Activation act, const Mat& s, const Mat& a) {
  Mat d(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < s.rows(); ++i) d(i, j) = activate_deriv(act, s(i, j), a(i, j));
  return d;
}

}  // namespace

Mat jacobian_vec(const Architecture& arch, const ParamVector& theta, const PassRecord& record,
                 const ParamVector& v) {
  if (v.size() != arch.param_count() || theta.size() != arch.param_count()) {
    throw ShapeError("jacobian_vec: parameter/direction length mismatch");
  }
  const int L = arch.num_layers();
  if (static_cast<int>(record.s.size()) != L) throw ShapeError("record does not match network");
  const Eigen::Index m = record.cases();
  // R-operator forward pass: R(abar_0) = 0, R(s_l) = V_l abar_l + W_l R(abar_l).
  Mat r_abar = Mat::Zero(arch.cols(0), m);
  Mat r_a;
  for (int l = 0; l < L; ++l) {
    Mat r_s = layer_block(arch, v, l) * record.abar[l];
    if (l > 0) r_s.noalias() += layer_block(arch, theta, l) * r_abar;
    const Mat a = l == L - 1 ? record.output : record.abar[l + 1].topRows(arch.dims[l + 1]);
    r_a = r_s.cwiseProduct(activation_slope(arch.activations[l], record.s[l], a));
    if (l + 1 < L) {
      r_abar.resize(arch.cols(l + 1), m);
      r_abar.topRows(arch.dims[l + 1]) = r_a;
      r_abar.row(arch.dims[l + 1]).setZero();
    }
  }
  return r_a;
}

Mat output_fisher_apply(const Architecture& arch, const PassRecord& record, const Mat& jv) {
  if (arch.loss == LossKind::squared_error) return jv;
  const Mat p = softmax_columns(record.output);
  Mat out = p.cwiseProduct(jv);
  const Eigen::RowVectorXd pj = p.cwiseProduct(jv).colwise().sum();
  for (Eigen::Index j = 0; j < jv.cols(); ++j) out.col(j) -= p.col(j) * pj(j);
  return out;
}

ParamVector fisher_vec(const Architecture& arch, const ParamVector& theta,
                       const PassRecord& record, const ParamVector& v) {
  if (record.cases() == 0) throw ShapeError("fisher_vec: empty batch");
  const Mat q = output_fisher_apply(arch, record, jacobian_vec(arch, theta, record, v));
  PassRecord scratch = record;
  return backprop(arch, theta, scratch, q);
}

QuadScalars quad_scalars(const Architecture& arch, const ParamVector& theta,
                         const PassRecord& record, const ParamVector& v, const ParamVector& u,
                         const ParamVector& grad, double lambda_eta) {
  const double inv_m = 1.0 / static_cast<double>(record.cases());
  const Mat jv = jacobian_vec(arch, theta, record, v);
  const Mat ju = jacobian_vec(arch, theta, record, u);
  const Mat fjv = output_fisher_apply(arch, record, jv);
  const Mat fju = output_fisher_apply(arch, record, ju);
  QuadScalars q;
  q.vFv = inv_m * jv.cwiseProduct(fjv).sum();
  q.uFv = inv_m * ju.cwiseProduct(fjv).sum();
  q.uFu = inv_m * ju.cwiseProduct(fju).sum();
  q.grad_dot_v = grad.dot(v);
  q.grad_dot_u = grad.dot(u);
  q.v_dot_v = v.squaredNorm();
  q.u_dot_v = u.dot(v);
  q.u_dot_u = u.squaredNorm();
  q.lambda_eta = lambda_eta;
  return q;
}

Mat dense_fisher(const Architecture& arch, const ParamVector& theta, const PassRecord& record) {
  const Eigen::Index n = arch.param_count();
  if (n > kDenseFisherLimit) {
    throw Error("dense_fisher: " + std::to_string(n) + " parameters exceeds the limit of " +
                std::to_string(kDenseFisherLimit));
  }
  Mat f(n, n);
  ParamVector e = ParamVector::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    e(c) = 1.0;
    f.col(c) = fisher_vec(arch, theta, record, e);
    e(c) = 0.0;
  }
  return f;
}

double quad_model(const Architecture& arch, const ParamVector& theta, const PassRecord& record,
                  const ParamVector& grad, const ParamVector& delta, double lambda_eta,
                  double h_theta) {
  const Mat jd = jacobian_vec(arch, theta, record, delta);
  const double dFd =
      jd.cwiseProduct(output_fisher_apply(arch, record, jd)).sum() / record.cases();
  return 0.5 * (dFd + lambda_eta * delta.squaredNorm()) + grad.dot(delta) + h_theta;
}

std::optional<double> reduction_ratio(double h_new, double h_old, double model_value) {
  const double predicted = model_value - h_old;
  if (!(std::abs(predicted) >= 1e-300)) return std::nullopt;
  return (h_new - h_old) / predicted;
}

}  // namespace kfac
